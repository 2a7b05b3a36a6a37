#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "mdiag/error.hpp"
#include "mdiag/signal.hpp"
#include "mdiag/spectral.hpp"

using namespace mdiag;
using namespace mdiag::signal;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "mdiag_test_signal";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

// Amplitude of a zero-phase sine at freq_hz, by projection. Exact when the
// record holds an integer number of cycles of every component.
double sine_amplitude(const TimeSeries& ts, double freq_hz) {
    double acc = 0.0;
    const auto x = ts.samples();
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += x[i] * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / ts.sample_rate_hz());
    return 2.0 * acc / static_cast<double>(x.size());
}

SynthConfig clean_config() {
    SynthConfig c;
    c.noise_sigma = 0.0;
    c.sample_rate_hz = 4096.0;
    c.duration_s = 5.0;
    c.slip = 0.05;
    return c;
}

}  // namespace

TEST_CASE("slip from motor nameplate") {
    MotorSpec m;
    CHECK(slip(m, 1715.0) == doctest::Approx(85.0 / 1800.0).epsilon(1e-15));
    CHECK(slip(m, 1715.0) == doctest::Approx(0.0472222).epsilon(1e-6));
    CHECK(slip(m, 1800.0) == 0.0);
    CHECK(slip(m, 1710.0) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK_THROWS_AS(slip(m, 1801.0), DomainError);
    CHECK_THROWS_AS(slip(m, 0.0), DomainError);
}

TEST_CASE("slip is unchanged when frequency and speed scale together") {
    MotorSpec a;
    MotorSpec b;
    b.supply_freq_hz = 50.0;
    CHECK(slip(a, 1715.0) == doctest::Approx(slip(b, 1715.0 * 50.0 / 60.0)).epsilon(1e-14));
}

TEST_CASE("motor spec validation") {
    MotorSpec m;
    CHECK_NOTHROW(m.validate());
    CHECK(m.synchronous_speed_rpm() == 1800.0);
    m.poles = 3;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.poles = 4;
    m.rated_speed_rpm = 1900.0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("fault labels") {
    CHECK(FaultCondition::from_broken_bars(0).label() == FaultLabel::HLT);
    CHECK(FaultCondition::from_broken_bars(3).name() == "BRB3");
    CHECK(FaultCondition::from_index(4).broken_bars() == 4);
    CHECK_THROWS_AS(FaultCondition::from_broken_bars(5), DomainError);
    CHECK(class_names() == std::vector<std::string>{"HLT", "BRB1", "BRB2", "BRB3", "BRB4"});
}

TEST_CASE("time series invariants") {
    CHECK_THROWS_AS(TimeSeries({}, 100.0, ChannelKind::Current), DomainError);
    CHECK_THROWS_AS(TimeSeries({1.0}, 0.0, ChannelKind::Current), DomainError);
    CHECK_THROWS_AS(TimeSeries({1.0, NAN}, 10.0, ChannelKind::Current), DomainError);
    CHECK(TimeSeries({1.0, 2.0}, 4.0, ChannelKind::Vibration).duration_s() == 0.5);
}

TEST_CASE("synthesized sideband amplitudes follow the per-bar law") {
    MotorSpec motor;
    auto cfg = clean_config();
    const double f = motor.supply_freq_hz;
    for (int bars = 0; bars <= 4; ++bars) {
        const auto ts = synthesize(cfg, FaultCondition::from_broken_bars(bars), motor);
        CHECK(ts.size() == 20480);
        CHECK(sine_amplitude(ts, f) == doctest::Approx(1.0).epsilon(1e-9));
        for (int k = 1; k <= 2; ++k) {
            const double expected = 0.02 * bars * std::pow(0.5, k - 1);
            CHECK(std::abs(sine_amplitude(ts, f * (1 - 2 * k * cfg.slip)) - expected) < 1e-9);
            CHECK(std::abs(sine_amplitude(ts, f * (1 + 2 * k * cfg.slip)) - expected) < 1e-9);
        }
        CHECK(std::abs(sine_amplitude(ts, 1.23 * f)) < 1e-9);
    }
}

TEST_CASE("vibration adds a component at 1.23 f") {
    MotorSpec motor;
    auto cfg = clean_config();
    cfg.kind = ChannelKind::Vibration;
    const auto ts = synthesize(cfg, FaultCondition::from_broken_bars(2), motor);
    CHECK(ts.kind() == ChannelKind::Vibration);
    CHECK(sine_amplitude(ts, 1.23 * 60.0) == doctest::Approx(0.3 * 0.04).epsilon(1e-7));
}

TEST_CASE("healthy clean signal has a single spectral peak") {
    MotorSpec motor;
    auto cfg = clean_config();
    cfg.duration_s = 2.0;  // 8192 samples, 0.5 Hz bins, 60 Hz on bin 120
    const auto ts = synthesize(cfg, FaultCondition::from_broken_bars(0), motor);
    const auto ps = spectral::power_spectrum(ts, spectral::WindowFn::Rectangular);
    const std::size_t peak = ps.nearest_bin(60.0);
    CHECK(ps.freqs_hz[peak] == 60.0);
    for (std::size_t j = 0; j < ps.magnitudes.size(); ++j)
        if (j != peak) CHECK(ps.magnitudes[j] < 1e-6 * ps.magnitudes[peak]);
}

TEST_CASE("BRB1 with one order adds peaks next to 54.34 and 65.66 Hz") {
    MotorSpec motor;
    auto cfg = clean_config();
    cfg.duration_s = 2.0;
    cfg.slip = 0.0472;
    cfg.sideband_orders = 1;
    const auto ts = synthesize(cfg, FaultCondition::from_broken_bars(1), motor);
    const auto ps = spectral::power_spectrum(ts, spectral::WindowFn::Hann);
    for (double fz : {60.0 * (1 - 2 * 0.0472), 60.0 * (1 + 2 * 0.0472)}) {
        const std::size_t j = ps.nearest_bin(fz);
        CHECK(std::abs(ps.freqs_hz[j] - fz) <= 0.25);
        CHECK(ps.magnitudes[j] > ps.magnitudes[j - 3]);
        CHECK(ps.magnitudes[j] > ps.magnitudes[j + 3]);
        CHECK(ps.magnitudes[j] > 1e-3 * ps.magnitudes[ps.nearest_bin(60.0)]);
    }
}

TEST_CASE("clean synthesis is bounded by the sum of tone amplitudes") {
    MotorSpec motor;
    SynthConfig cfg;
    cfg.noise_sigma = 0.0;
    const auto ts = synthesize(cfg, FaultCondition::from_broken_bars(4), motor);
    const double bound = 1.0 + 2.0 * (0.08 + 0.04);
    for (double v : ts.samples()) CHECK_LE(std::abs(v), bound);
}

TEST_CASE("synthesis is deterministic per seed") {
    MotorSpec motor;
    SynthConfig cfg;
    cfg.rng_seed = 99;
    const auto fault = FaultCondition::from_broken_bars(2);
    CHECK(synthesize(cfg, fault, motor) == synthesize(cfg, fault, motor));
    auto other = cfg;
    other.rng_seed = 100;
    CHECK_FALSE(synthesize(cfg, fault, motor) == synthesize(other, fault, motor));
    cfg.noise_sigma = 0.0;
    other.noise_sigma = 0.0;
    CHECK(synthesize(cfg, fault, motor) == synthesize(other, fault, motor));
}

TEST_CASE("synthesis rejects a sample rate without Nyquist margin") {
    MotorSpec motor;
    SynthConfig cfg;
    cfg.sample_rate_hz = 4.0 * 60.0 * (1.0 + 2.0 * 2.0 * cfg.slip) - 1e-6;
    CHECK_THROWS_AS(synthesize(cfg, FaultCondition::from_broken_bars(1), motor), ConfigError);
    cfg.sample_rate_hz += 1.0;
    CHECK_NOTHROW(synthesize(cfg, FaultCondition::from_broken_bars(1), motor));
}

TEST_CASE("csv loading") {
    const auto p = temp_file("rows.csv");
    write_text(p, "0.1\n0.2\n0.3\n");
    const auto ts = load_csv(p, 10.0, ChannelKind::Current);
    CHECK(std::vector<double>(ts.samples().begin(), ts.samples().end()) == std::vector<double>{0.1, 0.2, 0.3});

    write_text(p, "current_a\n1.5\n\n-2e-3\n");
    CHECK(load_csv(p, 10.0, ChannelKind::Current).size() == 2);

    write_text(p, "0.1\nabc\n0.3\n");
    try {
        load_csv(p, 10.0, ChannelKind::Current);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    write_text(p, "");
    CHECK_THROWS_AS(load_csv(p, 10.0, ChannelKind::Current), FormatError);
    CHECK_THROWS_AS(load_csv(temp_file("missing.csv"), 10.0, ChannelKind::Current), IoError);
}

TEST_CASE("csv round trip is exact") {
    MotorSpec motor;
    SynthConfig cfg;
    cfg.duration_s = 0.1;
    cfg.rng_seed = 5;
    const auto ts = synthesize(cfg, FaultCondition::from_broken_bars(3), motor);
    const auto p = temp_file("roundtrip.csv");
    save_csv(ts, p);
    CHECK(load_csv(p, ts.sample_rate_hz(), ts.kind()) == ts);
}

TEST_CASE("segmenting") {
    std::vector<double> v(10);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
    const TimeSeries ts(v, 1.0, ChannelKind::Current);

    auto one = segment(ts, 10, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == ts);

    auto four = segment(ts, 4, 2);
    REQUIRE(four.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(four[i].samples()[0] == static_cast<double>(2 * i));

    auto tiles = segment(ts, 3, 3);
    std::vector<double> joined;
    for (const auto& s : tiles) joined.insert(joined.end(), s.samples().begin(), s.samples().end());
    CHECK(joined == std::vector<double>(v.begin(), v.begin() + 9));

    CHECK_THROWS_AS(segment(ts, 11, 1), DomainError);
    CHECK_THROWS_AS(segment(ts, 2, 0), DomainError);
}
