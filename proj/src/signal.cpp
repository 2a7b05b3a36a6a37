#include "mdiag/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "mdiag/error.hpp"

namespace mdiag::signal {

std::string_view to_string(ChannelKind kind) {
    return kind == ChannelKind::Current ? "current" : "vibration";
}

ChannelKind channel_kind_from_string(std::string_view name) {
    if (name == "current") return ChannelKind::Current;
    if (name == "vibration") return ChannelKind::Vibration;
    throw ConfigError("unknown channel kind '" + std::string(name) + "' (expected current|vibration)");
}

TimeSeries::TimeSeries(std::vector<double> samples, double sample_rate_hz, ChannelKind kind)
    : samples_(std::move(samples)), sample_rate_hz_(sample_rate_hz), kind_(kind) {
    if (samples_.empty()) throw DomainError("time series must contain at least one sample");
    if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_))
        throw DomainError("sample rate must be positive");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        if (!std::isfinite(samples_[i]))
            throw DomainError("non-finite sample at index " + std::to_string(i));
    }
}

void MotorSpec::validate() const {
    if (poles < 2 || poles % 2 != 0) throw ConfigError("motor poles must be even and >= 2");
    if (!(supply_freq_hz > 0.0)) throw ConfigError("supply frequency must be positive");
    if (rotor_bars < 1) throw ConfigError("rotor bar count must be positive");
    if (!(rated_speed_rpm > 0.0) || !(rated_speed_rpm < synchronous_speed_rpm()))
        throw ConfigError("rated speed must lie in (0, synchronous speed)");
}

FaultCondition FaultCondition::from_broken_bars(int broken_bars) {
    if (broken_bars < 0 || broken_bars >= kNumClasses)
        throw DomainError("broken bar count must be in 0..4, got " + std::to_string(broken_bars));
    return FaultCondition(static_cast<FaultLabel>(broken_bars));
}

std::string_view FaultCondition::name() const { return class_name(class_index()); }

const std::vector<std::string>& class_names() {
    static const std::vector<std::string> names{"HLT", "BRB1", "BRB2", "BRB3", "BRB4"};
    return names;
}

std::string_view class_name(int class_index) {
    if (class_index < 0 || class_index >= kNumClasses)
        throw DomainError("class index out of range: " + std::to_string(class_index));
    return class_names()[static_cast<std::size_t>(class_index)];
}

void SynthConfig::validate(const MotorSpec& motor) const {
    if (!(fundamental_amplitude > 0.0)) throw ConfigError("fundamental_amplitude must be > 0");
    if (!(slip > 0.0 && slip < 1.0)) throw ConfigError("slip must lie in (0, 1)");
    if (sideband_orders < 1) throw ConfigError("sideband_orders must be >= 1");
    if (!(per_bar_gain >= 0.0)) throw ConfigError("per_bar_gain must be >= 0");
    if (!(order_decay > 0.0 && order_decay <= 1.0)) throw ConfigError("order_decay must lie in (0, 1]");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (!(duration_s > 0.0)) throw ConfigError("duration_s must be > 0");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz must be > 0");
    const double highest = motor.supply_freq_hz * (1.0 + 2.0 * sideband_orders * slip);
    if (!(sample_rate_hz > 4.0 * highest)) {
        std::ostringstream msg;
        msg << "sample rate " << sample_rate_hz << " Hz does not exceed 4x the highest sideband ("
            << highest << " Hz)";
        throw ConfigError(msg.str());
    }
}

double slip(const MotorSpec& motor, double measured_speed_rpm) {
    const double sync = motor.synchronous_speed_rpm();
    if (!(measured_speed_rpm > 0.0))
        throw DomainError("measured speed must be positive");
    if (measured_speed_rpm > sync) {
        std::ostringstream msg;
        msg << "measured speed " << measured_speed_rpm << " rpm exceeds synchronous speed " << sync << " rpm";
        throw DomainError(msg.str());
    }
    return (sync - measured_speed_rpm) / sync;
}

TimeSeries synthesize(const SynthConfig& cfg, const FaultCondition& fault, const MotorSpec& motor) {
    cfg.validate(motor);

    const double two_pi = 2.0 * std::numbers::pi;
    const double f = motor.supply_freq_hz;
    const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
    if (n == 0) throw ConfigError("duration too short for one sample");

    struct Tone {
        double freq;
        double amp;
    };
    std::vector<Tone> tones{{f, cfg.fundamental_amplitude}};
    const double bars = fault.broken_bars();
    if (bars > 0) {
        double a_k = cfg.per_bar_gain * bars;
        for (int k = 1; k <= cfg.sideband_orders; ++k) {
            const double shift = 2.0 * k * cfg.slip;
            tones.push_back({f * (1.0 - shift), a_k});
            tones.push_back({f * (1.0 + shift), a_k});
            a_k *= cfg.order_decay;
        }
        if (cfg.kind == ChannelKind::Vibration)
            tones.push_back({1.23 * f, 0.3 * cfg.per_bar_gain * bars});
    }

    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.sample_rate_hz;
        double v = 0.0;
        for (const auto& tone : tones) v += tone.amp * std::sin(two_pi * tone.freq * t);
        x[i] = v;
    }
    if (cfg.noise_sigma > 0.0) {
        std::mt19937_64 rng(cfg.rng_seed);
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
        for (auto& v : x) v += noise(rng);
    }
    return TimeSeries(std::move(x), cfg.sample_rate_hz, cfg.kind);
}

namespace {

bool parse_double(std::string_view text, double& out) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
        text.remove_suffix(1);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace

TimeSeries load_csv(const std::filesystem::path& path, double sample_rate_hz, ChannelKind kind) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    std::vector<double> samples;
    std::string line;
    std::size_t line_no = 0;
    bool seen_content = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        double v = 0.0;
        if (parse_double(line, v)) {
            samples.push_back(v);
        } else if (!seen_content && line_no == 1) {
            // header
        } else {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": non-numeric value '" +
                                 line + "'",
                             line_no);
        }
        seen_content = true;
    }
    if (samples.empty()) throw FormatError(path.string() + ": no numeric rows");
    if (!std::all_of(samples.begin(), samples.end(), [](double v) { return std::isfinite(v); }))
        throw FormatError(path.string() + ": non-finite value");
    return TimeSeries(std::move(samples), sample_rate_hz, kind);
}

void save_csv(const TimeSeries& ts, const std::filesystem::path& path, std::string_view header) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    if (!header.empty()) out << header << '\n';
    out.precision(17);
    for (double v : ts.samples()) out << v << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<TimeSeries> segment(const TimeSeries& ts, std::size_t window_len, std::size_t hop) {
    if (window_len < 1) throw DomainError("segment window must be >= 1");
    if (hop < 1) throw DomainError("segment hop must be >= 1");
    if (window_len > ts.size())
        throw DomainError("segment window " + std::to_string(window_len) + " exceeds series length " +
                          std::to_string(ts.size()));
    const std::size_t count = (ts.size() - window_len) / hop + 1;
    std::vector<TimeSeries> out;
    out.reserve(count);
    const auto s = ts.samples();
    for (std::size_t i = 0; i < count; ++i) {
        const auto first = s.begin() + static_cast<std::ptrdiff_t>(i * hop);
        out.emplace_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(window_len)),
                         ts.sample_rate_hz(), ts.kind());
    }
    return out;
}

}  // namespace mdiag::signal
