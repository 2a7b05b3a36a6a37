#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mdiag::signal {

enum class ChannelKind { Current, Vibration };

std::string_view to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(std::string_view name);

/// Uniformly sampled stator current (A) or vibration (mm/s) record.
/// Always non-empty, finite, with a positive sample rate.
class TimeSeries {
public:
    TimeSeries(std::vector<double> samples, double sample_rate_hz, ChannelKind kind);

    std::span<const double> samples() const { return samples_; }
    double sample_rate_hz() const { return sample_rate_hz_; }
    ChannelKind kind() const { return kind_; }
    std::size_t size() const { return samples_.size(); }
    double duration_s() const { return static_cast<double>(samples_.size()) / sample_rate_hz_; }

    bool operator==(const TimeSeries&) const = default;

private:
    std::vector<double> samples_;
    double sample_rate_hz_;
    ChannelKind kind_;
};

struct MotorSpec {
    double supply_freq_hz = 60.0;
    int poles = 4;
    double rated_speed_rpm = 1715.0;
    int rotor_bars = 34;

    double synchronous_speed_rpm() const { return 120.0 * supply_freq_hz / poles; }
    /// Throws ConfigError unless poles are even and >= 2 and the rated speed is sub-synchronous.
    void validate() const;
};

enum class FaultLabel { HLT = 0, BRB1 = 1, BRB2 = 2, BRB3 = 3, BRB4 = 4 };

inline constexpr int kNumClasses = 5;

class FaultCondition {
public:
    explicit FaultCondition(FaultLabel label) : label_(label) {}
    static FaultCondition from_broken_bars(int broken_bars);
    static FaultCondition from_index(int class_index) { return from_broken_bars(class_index); }

    FaultLabel label() const { return label_; }
    int broken_bars() const { return static_cast<int>(label_); }
    int class_index() const { return static_cast<int>(label_); }
    std::string_view name() const;

    bool operator==(const FaultCondition&) const = default;

private:
    FaultLabel label_;
};

std::string_view class_name(int class_index);
/// The five class names in index order: HLT, BRB1 .. BRB4.
const std::vector<std::string>& class_names();

struct SynthConfig {
    double fundamental_amplitude = 1.0;
    double slip = (1800.0 - 1715.0) / 1800.0;
    int sideband_orders = 2;
    /// Sideband amplitude per broken bar at k = 1 (absolute units).
    double per_bar_gain = 0.02;
    double order_decay = 0.5;
    double noise_sigma = 0.05;
    double duration_s = 2.0;
    double sample_rate_hz = 10'000.0;
    std::uint64_t rng_seed = 0;
    ChannelKind kind = ChannelKind::Current;

    /// Throws ConfigError when a field is out of range or the sideband set would alias.
    void validate(const MotorSpec& motor) const;
};

/// (n_sync - n) / n_sync. Throws DomainError for non-positive or super-synchronous speed.
double slip(const MotorSpec& motor, double measured_speed_rpm);

/// Supply tone plus k = 1..K sideband pairs at f(1 -+ 2ks) plus Gaussian noise.
/// Sideband k has amplitude per_bar_gain * broken_bars * order_decay^(k-1).
/// Vibration records additionally carry a tone at 1.23 f with 0.3 times the
/// first sideband amplitude.
TimeSeries synthesize(const SynthConfig& cfg, const FaultCondition& fault, const MotorSpec& motor);

/// Reads one value per row; a single non-numeric first line is taken as a header.
TimeSeries load_csv(const std::filesystem::path& path, double sample_rate_hz, ChannelKind kind);

/// Writes one value per row with 17 significant digits (exact round-trip).
void save_csv(const TimeSeries& ts, const std::filesystem::path& path,
              std::string_view header = "value");

/// Windows of window_len samples starting every hop samples.
std::vector<TimeSeries> segment(const TimeSeries& ts, std::size_t window_len, std::size_t hop);

}  // namespace mdiag::signal
