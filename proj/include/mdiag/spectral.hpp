#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "mdiag/signal.hpp"

namespace mdiag::spectral {

using Complex = std::complex<double>;
/// X(j), j = 0..N-1, same length as the transformed sequence.
using ComplexSpectrum = std::vector<Complex>;

/// Direct O(N^2) evaluation of the DFT sum. Reference for fft().
ComplexSpectrum dft_naive(std::span<const Complex> x);

/// Iterative radix-2 decimation-in-time FFT. Length must be a power of two.
ComplexSpectrum fft(std::span<const Complex> x);

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

enum class WindowFn { Rectangular, Hann, Hamming };

std::string_view to_string(WindowFn fn);
WindowFn window_from_string(std::string_view name);

/// Periodic window of length len, values in [0, 1].
std::vector<double> make_window(WindowFn fn, std::size_t len);

/// One-sided magnitude spectrum; freqs_hz[j] = j * fs / N for j = 0..N/2.
struct PowerSpectrum {
    std::vector<double> freqs_hz;
    std::vector<double> magnitudes;

    double bin_width_hz() const { return freqs_hz.size() > 1 ? freqs_hz[1] - freqs_hz[0] : 0.0; }
    std::size_t nearest_bin(double freq_hz) const;
};

/// Windows the series, zero-pads to the next power of two and returns |X(j)|.
PowerSpectrum power_spectrum(const signal::TimeSeries& ts, WindowFn window);

struct SidebandPair {
    int order;
    double left_hz;
    double right_hz;
};

/// f_s(1 - 2ks), f_s(1 + 2ks) for k = 1..K. Requires 0 <= s < 0.5 / K.
std::vector<SidebandPair> brb_sideband_freqs(double supply_hz, double slip, int orders);

struct SidebandHit {
    int order;
    bool left;  ///< lower sideband f(1 - 2ks)
    double expected_hz;
    double found_hz;
    double magnitude;
};

/// For every expected sideband, the strongest bin within +-search_halfwidth_bins
/// of the bin nearest to it. Ordered k ascending, left before right.
std::vector<SidebandHit> detect_sidebands(const PowerSpectrum& ps, double supply_hz, double slip,
                                          int orders, int search_halfwidth_bins);

struct StftParams {
    std::size_t window_len = 256;
    std::size_t hop = 64;
    WindowFn window = WindowFn::Hann;
};

/// Magnitude STFT. frames is row-major (num_frames x num_bins).
struct Spectrogram {
    std::size_t num_frames = 0;
    std::size_t num_bins = 0;
    std::vector<double> frames;
    std::vector<double> frame_times_s;  ///< centre of each frame
    std::vector<double> bin_freqs_hz;
    StftParams params;

    double at(std::size_t frame, std::size_t bin) const { return frames[frame * num_bins + bin]; }
};

std::size_t stft_frame_count(std::size_t len, std::size_t window_len, std::size_t hop);

Spectrogram stft(const signal::TimeSeries& ts, const StftParams& params);

/// channels x height x width, values in [0, 1], row-major.
struct ImageTensor {
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    std::size_t size() const { return channels * height * width; }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return values[(c * height + y) * width + x];
    }
    bool operator==(const ImageTensor&) const = default;
};

inline constexpr double kDbFloor = 1e-12;

/// 10 log10(mag^2 + 1e-12), min-max normalised per image, bilinearly resized.
/// Time runs along the width, frequency along the height with DC on the bottom row.
ImageTensor spectrogram_image(const Spectrogram& spec, std::size_t height, std::size_t width);

void write_spectrum_csv(const PowerSpectrum& ps, const std::filesystem::path& path);
void write_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path);
/// Binary P5, 8-bit, pixel = round(255 v). Only the first channel is written.
void write_pgm(const ImageTensor& img, const std::filesystem::path& path);

}  // namespace mdiag::spectral
