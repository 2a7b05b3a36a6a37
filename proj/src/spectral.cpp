#include "mdiag/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mdiag/error.hpp"

namespace mdiag::spectral {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

ComplexSpectrum dft_naive(std::span<const Complex> x) {
    const std::size_t n = x.size();
    if (n == 0) throw DomainError("DFT of an empty sequence");
    ComplexSpectrum out(n);
    for (std::size_t j = 0; j < n; ++j) {
        Complex acc{0.0, 0.0};
        for (std::size_t k = 0; k < n; ++k) {
            // Reduce jk mod N first so the angle stays small and accurate.
            const auto r = static_cast<double>((j * k) % n);
            const double angle = -kTwoPi * r / static_cast<double>(n);
            acc += x[k] * Complex(std::cos(angle), std::sin(angle));
        }
        out[j] = acc;
    }
    return out;
}

ComplexSpectrum fft(std::span<const Complex> x) {
    const std::size_t n = x.size();
    if (!is_power_of_two(n))
        throw DomainError("fft length " + std::to_string(n) + " is not a power of two");
    ComplexSpectrum a(x.begin(), x.end());
    if (n == 1) return a;

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    std::vector<Complex> twiddle(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double angle = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
        twiddle[k] = Complex(std::cos(angle), std::sin(angle));
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex u = a[start + k];
                const Complex v = a[start + k + half] * twiddle[k * step];
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
    }
    return a;
}

std::string_view to_string(WindowFn fn) {
    switch (fn) {
        case WindowFn::Rectangular: return "rectangular";
        case WindowFn::Hann: return "hann";
        case WindowFn::Hamming: return "hamming";
    }
    return "?";
}

WindowFn window_from_string(std::string_view name) {
    if (name == "rectangular" || name == "rect") return WindowFn::Rectangular;
    if (name == "hann") return WindowFn::Hann;
    if (name == "hamming") return WindowFn::Hamming;
    throw ConfigError("unknown window '" + std::string(name) + "' (expected rectangular|hann|hamming)");
}

std::vector<double> make_window(WindowFn fn, std::size_t len) {
    std::vector<double> w(len, 1.0);
    if (fn == WindowFn::Rectangular) return w;
    const double a0 = fn == WindowFn::Hann ? 0.5 : 0.54;
    for (std::size_t k = 0; k < len; ++k) {
        const double v = a0 - (1.0 - a0) * std::cos(kTwoPi * static_cast<double>(k) / static_cast<double>(len));
        w[k] = std::clamp(v, 0.0, 1.0);
    }
    return w;
}

std::size_t PowerSpectrum::nearest_bin(double freq_hz) const {
    const double width = bin_width_hz();
    if (width <= 0.0) return 0;
    const auto idx = static_cast<long long>(std::llround(freq_hz / width));
    return static_cast<std::size_t>(std::clamp<long long>(idx, 0, static_cast<long long>(freqs_hz.size()) - 1));
}

PowerSpectrum power_spectrum(const signal::TimeSeries& ts, WindowFn window) {
    const auto samples = ts.samples();
    const std::size_t n = next_power_of_two(samples.size());
    const auto w = make_window(window, samples.size());
    std::vector<Complex> buf(n, Complex{0.0, 0.0});
    for (std::size_t i = 0; i < samples.size(); ++i) buf[i] = Complex(samples[i] * w[i], 0.0);
    const auto spectrum = fft(buf);

    PowerSpectrum ps;
    const std::size_t bins = n / 2 + 1;
    ps.freqs_hz.resize(bins);
    ps.magnitudes.resize(bins);
    for (std::size_t j = 0; j < bins; ++j) {
        ps.freqs_hz[j] = static_cast<double>(j) * ts.sample_rate_hz() / static_cast<double>(n);
        ps.magnitudes[j] = std::abs(spectrum[j]);
    }
    return ps;
}

std::vector<SidebandPair> brb_sideband_freqs(double supply_hz, double slip, int orders) {
    if (!(supply_hz > 0.0)) throw DomainError("supply frequency must be positive");
    if (orders < 1) throw DomainError("sideband order count must be >= 1");
    if (!(slip >= 0.0 && slip < 0.5 / orders))
        throw DomainError("slip must satisfy 0 <= s < 0.5/K so every lower sideband stays positive");
    std::vector<SidebandPair> out;
    out.reserve(static_cast<std::size_t>(orders));
    for (int k = 1; k <= orders; ++k) {
        const double shift = 2.0 * k * slip;
        out.push_back({k, supply_hz * (1.0 - shift), supply_hz * (1.0 + shift)});
    }
    return out;
}

std::vector<SidebandHit> detect_sidebands(const PowerSpectrum& ps, double supply_hz, double slip,
                                          int orders, int search_halfwidth_bins) {
    if (search_halfwidth_bins < 0) throw DomainError("search half-width must be >= 0");
    if (ps.freqs_hz.size() < 2) throw DomainError("spectrum has fewer than two bins");
    const auto pairs = brb_sideband_freqs(supply_hz, slip, orders);
    const double top = ps.freqs_hz.back();
    const auto last = static_cast<long long>(ps.freqs_hz.size()) - 1;

    std::vector<SidebandHit> hits;
    auto locate = [&](int order, bool left, double expected) {
        if (expected < 0.0 || expected > top) {
            std::ostringstream msg;
            msg << "expected sideband " << expected << " Hz lies outside the spectrum [0, " << top << "] Hz";
            throw DomainError(msg.str());
        }
        const auto centre = static_cast<long long>(ps.nearest_bin(expected));
        const long long lo = std::max(0LL, centre - search_halfwidth_bins);
        const long long hi = std::min(last, centre + search_halfwidth_bins);
        auto best = static_cast<std::size_t>(centre);
        for (long long b = lo; b <= hi; ++b) {
            const auto idx = static_cast<std::size_t>(b);
            if (ps.magnitudes[idx] > ps.magnitudes[best]) best = idx;
        }
        hits.push_back({order, left, expected, ps.freqs_hz[best], ps.magnitudes[best]});
    };
    for (const auto& p : pairs) {
        locate(p.order, true, p.left_hz);
        locate(p.order, false, p.right_hz);
    }
    return hits;
}

std::size_t stft_frame_count(std::size_t len, std::size_t window_len, std::size_t hop) {
    if (window_len == 0 || hop == 0 || window_len > len) return 0;
    return (len - window_len) / hop + 1;
}

Spectrogram stft(const signal::TimeSeries& ts, const StftParams& params) {
    if (!is_power_of_two(params.window_len))
        throw DomainError("STFT window length must be a power of two");
    if (params.hop < 1) throw DomainError("STFT hop must be >= 1");
    if (params.window_len > ts.size())
        throw DomainError("STFT window length " + std::to_string(params.window_len) +
                          " exceeds signal length " + std::to_string(ts.size()));

    const auto x = ts.samples();
    const std::size_t wlen = params.window_len;
    const auto w = make_window(params.window, wlen);

    Spectrogram spec;
    spec.params = params;
    spec.num_frames = stft_frame_count(x.size(), wlen, params.hop);
    spec.num_bins = wlen / 2 + 1;
    spec.frames.resize(spec.num_frames * spec.num_bins);
    spec.frame_times_s.resize(spec.num_frames);
    spec.bin_freqs_hz.resize(spec.num_bins);
    const double fs = ts.sample_rate_hz();
    for (std::size_t b = 0; b < spec.num_bins; ++b)
        spec.bin_freqs_hz[b] = static_cast<double>(b) * fs / static_cast<double>(wlen);

    std::vector<Complex> block(wlen);
    for (std::size_t m = 0; m < spec.num_frames; ++m) {
        const std::size_t start = m * params.hop;
        for (std::size_t z = 0; z < wlen; ++z) block[z] = Complex(x[start + z] * w[z], 0.0);
        const auto bins = fft(block);
        for (std::size_t b = 0; b < spec.num_bins; ++b) spec.frames[m * spec.num_bins + b] = std::abs(bins[b]);
        spec.frame_times_s[m] = (static_cast<double>(start) + 0.5 * static_cast<double>(wlen)) / fs;
    }
    return spec;
}

namespace {

// Align-corners sample position of destination index i in a source of length src.
double source_coord(std::size_t i, std::size_t dst, std::size_t src) {
    if (src == 1) return 0.0;
    if (dst == 1) return 0.5 * static_cast<double>(src - 1);
    return static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1);
}

}  // namespace

ImageTensor spectrogram_image(const Spectrogram& spec, std::size_t height, std::size_t width) {
    if (height < 1 || width < 1) throw ShapeError("image height and width must be >= 1");
    if (spec.num_frames == 0 || spec.num_bins == 0) throw ShapeError("empty spectrogram");

    std::vector<double> db(spec.frames.size());
    for (std::size_t i = 0; i < db.size(); ++i) db[i] = 10.0 * std::log10(spec.frames[i] * spec.frames[i] + kDbFloor);
    const auto [lo_it, hi_it] = std::minmax_element(db.begin(), db.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    for (auto& v : db) v = range > 0.0 ? (v - lo) / range : 0.0;

    ImageTensor img;
    img.channels = 1;
    img.height = height;
    img.width = width;
    img.values.resize(height * width);

    const std::size_t frames = spec.num_frames;
    const std::size_t bins = spec.num_bins;
    for (std::size_t row = 0; row < height; ++row) {
        // bottom row is DC
        const double fb = source_coord(height - 1 - row, height, bins);
        const auto b0 = static_cast<std::size_t>(std::floor(fb));
        const std::size_t b1 = std::min(b0 + 1, bins - 1);
        const double tb = fb - static_cast<double>(b0);
        for (std::size_t col = 0; col < width; ++col) {
            const double fm = source_coord(col, width, frames);
            const auto m0 = static_cast<std::size_t>(std::floor(fm));
            const std::size_t m1 = std::min(m0 + 1, frames - 1);
            const double tm = fm - static_cast<double>(m0);
            const double v00 = db[m0 * bins + b0];
            const double v01 = db[m0 * bins + b1];
            const double v10 = db[m1 * bins + b0];
            const double v11 = db[m1 * bins + b1];
            const double v = (1.0 - tm) * ((1.0 - tb) * v00 + tb * v01) + tm * ((1.0 - tb) * v10 + tb * v11);
            img.values[row * width + col] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return img;
}

void write_spectrum_csv(const PowerSpectrum& ps, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "freq_hz,magnitude\n";
    for (std::size_t j = 0; j < ps.freqs_hz.size(); ++j) out << ps.freqs_hz[j] << ',' << ps.magnitudes[j] << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

void write_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "time_s";
    for (double f : spec.bin_freqs_hz) out << ',' << f;
    out << '\n';
    for (std::size_t m = 0; m < spec.num_frames; ++m) {
        out << spec.frame_times_s[m];
        for (std::size_t b = 0; b < spec.num_bins; ++b) out << ',' << spec.at(m, b);
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void write_pgm(const ImageTensor& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<unsigned char> bytes(img.width * img.height);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const double v = std::clamp(static_cast<double>(img.values[i]), 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(255.0 * v));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mdiag::spectral
