// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mdiag/baselines.hpp"
#include "mdiag/dataset.hpp"
#include "mdiag/eval.hpp"
#include "mdiag/nn/model.hpp"
#include "mdiag/signal.hpp"
#include "mdiag/spectral.hpp"

using namespace mdiag;
using Clock = std::chrono::steady_clock;
using Complex = std::complex<double>;

namespace {

// Tolerances and budgets.
constexpr double kFftTol = 1e-9;
constexpr double kFftBudgetS = 5.0;
constexpr double kStftTol = 1e-9;
constexpr double kSidebandTolHz = 0.5;
constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetS = 60.0;
constexpr double kDeskAccuracy = 0.95;
constexpr std::size_t kDeskEpochs = 30;
constexpr double kDeskBudgetS = 600.0;
constexpr double kTableTol = 0.005;

// Desk-scale dataset.
constexpr std::size_t kPerClass = 300;
constexpr double kTrainFraction = 250.0 / 300.0;
constexpr double kDeskSampleRate = 500.0;
constexpr std::uint64_t kDatasetSeed = 1234;
constexpr std::uint64_t kSplitSeed = 7;
constexpr std::uint64_t kArchSeed = 42;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::vector<Complex> naive_dft(const std::vector<Complex>& x) {
    const std::size_t n = x.size();
    std::vector<Complex> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        Complex acc = 0;
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * M_PI * static_cast<double>((k * t) % n) / static_cast<double>(n);
            acc += x[t] * Complex(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

Outcome fft_correctness() {
    std::mt19937_64 rng(101);
    std::normal_distribution<double> d;
    double worst = 0.0, worst_parseval = 0.0;
    double fft_time = 0.0;
    for (std::size_t n = 1; n <= 1024; n *= 2) {
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<Complex> x(n);
            for (auto& v : x) v = {d(rng), d(rng)};
            const auto t0 = Clock::now();
            const auto fast = spectral::fft(x);
            fft_time += seconds_since(t0);
            const auto ref = naive_dft(x);
            double err = 0.0, scale = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                err = std::max(err, std::abs(fast[k] - ref[k]));
                scale = std::max(scale, std::abs(ref[k]));
            }
            worst = std::max(worst, err / scale);
            double et = 0.0, ef = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                et += std::norm(x[k]);
                ef += std::norm(fast[k]);
            }
            worst_parseval = std::max(worst_parseval, std::abs(et - ef / static_cast<double>(n)) / et);
        }
    }
    return {worst < kFftTol && worst_parseval < kFftTol && fft_time < kFftBudgetS,
            "max rel err " + fmt("%.2e", worst) + ", Parseval " + fmt("%.2e", worst_parseval) + ", fft time " +
                fmt("%.3f s", fft_time)};
}

Outcome stft_blockwise() {
    std::mt19937_64 rng(202);
    std::normal_distribution<double> d;
    std::uniform_int_distribution<std::size_t> len_dist(300, 3000);
    const std::size_t lens[] = {16, 32, 64, 128, 256};
    double worst = 0.0;
    bool shapes_ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t wl = lens[trial % 5];
        std::vector<double> x(len_dist(rng));
        for (auto& v : x) v = d(rng);
        const auto spec = spectral::stft(signal::TimeSeries(x, 1000.0, signal::ChannelKind::Current),
                                         {wl, wl, spectral::WindowFn::Rectangular});
        shapes_ok = shapes_ok && spec.num_frames == x.size() / wl && spec.num_bins == wl / 2 + 1;
        for (std::size_t m = 0; m < spec.num_frames; ++m) {
            std::vector<Complex> block(x.begin() + static_cast<std::ptrdiff_t>(m * wl),
                                       x.begin() + static_cast<std::ptrdiff_t>((m + 1) * wl));
            const auto ref = naive_dft(block);
            for (std::size_t b = 0; b < spec.num_bins; ++b)
                worst = std::max(worst, std::abs(spec.at(m, b) - std::abs(ref[b])));
        }
    }
    return {shapes_ok && worst < kStftTol, "max abs err " + fmt("%.2e", worst)};
}

Outcome sideband_physics() {
    signal::MotorSpec motor;
    signal::SynthConfig cfg;
    cfg.slip = 0.0472;
    cfg.noise_sigma = 0.0;
    cfg.duration_s = 2.0;
    cfg.sample_rate_hz = 10'000.0;
    const double supply = motor.supply_freq_hz;

    bool ok = true;
    double worst_offset = 0.0;
    std::vector<std::vector<double>> mags(static_cast<std::size_t>(cfg.sideband_orders) * 2);
    for (int bars = 1; bars <= 4; ++bars) {
        const auto ts = signal::synthesize(cfg, signal::FaultCondition::from_broken_bars(bars), motor);
        const auto ps = spectral::power_spectrum(ts, spectral::WindowFn::Hann);
        const auto hits = spectral::detect_sidebands(ps, supply, cfg.slip, cfg.sideband_orders, 2);
        const auto expected = spectral::brb_sideband_freqs(supply, cfg.slip, cfg.sideband_orders);
        for (std::size_t i = 0; i < hits.size(); ++i) {
            const auto& pair = expected[i / 2];
            const double want = hits[i].left ? supply * (1 - 2 * pair.order * cfg.slip)
                                             : supply * (1 + 2 * pair.order * cfg.slip);
            const double off = std::abs(hits[i].found_hz - want);
            worst_offset = std::max(worst_offset, off);
            ok = ok && off <= kSidebandTolHz;
            mags[i].push_back(hits[i].magnitude);
        }
    }
    for (const auto& m : mags)
        for (std::size_t b = 1; b < m.size(); ++b) ok = ok && m[b] >= m[b - 1];
    return {ok, "max offset " + fmt("%.3f Hz", worst_offset) + ", magnitudes monotone in bar count"};
}

Outcome gradient_fidelity() {
    const auto t0 = Clock::now();
    nn::ShuffleModel model(nn::tiny_arch(), 9);
    std::mt19937_64 rng(303);
    std::normal_distribution<double> d;
    nn::Tensor4 x(2, 1, 8, 8);
    for (auto& v : x.data) v = d(rng);
    const int labels[] = {2, 4};
    model.zero_grad();
    const auto res = nn::softmax_cross_entropy(model.forward(x, nn::Mode::Train), labels);
    model.backward(res.dlogits);

    double worst = 0.0;
    std::size_t checked = 0;
    for (const auto& ref : model.parameters()) {
        for (std::size_t i = 0; i < ref.param->size(); ++i) {
            double& v = ref.param->value[i];
            const double keep = v;
            v = keep + kGradStep;
            const double up = nn::softmax_cross_entropy(model.forward(x, nn::Mode::Train), labels).loss;
            v = keep - kGradStep;
            const double down = nn::softmax_cross_entropy(model.forward(x, nn::Mode::Train), labels).loss;
            v = keep;
            const double num = (up - down) / (2 * kGradStep);
            const double ana = ref.param->grad[i];
            worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
            ++checked;
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst < kGradTol && elapsed < kGradBudgetS,
            std::to_string(checked) + " parameters, max rel err " + fmt("%.2e", worst) + ", " + fmt("%.2f s", elapsed)};
}

Outcome shuffle_algebra() {
    std::size_t pairs = 0;
    bool ok = true;
    for (std::size_t c = 1; c <= 32; ++c) {
        for (std::size_t g = 1; g <= c; ++g) {
            if (c % g) continue;
            nn::Tensor4 idx(1, c, 1, 1);
            std::iota(idx.data.begin(), idx.data.end(), 0.0);
            const auto s = nn::channel_shuffle(idx, g);
            auto sorted = s.data;
            std::sort(sorted.begin(), sorted.end());
            ok = ok && sorted == idx.data;
            ok = ok && nn::channel_shuffle(s, c / g) == idx;
            ++pairs;
        }
    }
    return {ok, std::to_string(pairs) + " (C, g) pairs"};
}

struct DeskData {
    dataset::Dataset ds;
    nn::LabeledImages train, test;
};

signal::SynthConfig desk_synth() {
    signal::SynthConfig cfg;
    cfg.sample_rate_hz = kDeskSampleRate;
    return cfg;
}

DeskData build_desk(std::size_t per_class, double train_fraction) {
    DeskData d;
    d.ds = dataset::build_synthetic_dataset(per_class, desk_synth(), signal::MotorSpec{}, spectral::StftParams{},
                                            dataset::ImageDims{}, kDatasetSeed);
    d.ds.manifest = dataset::split(d.ds.manifest, train_fraction, kSplitSeed);
    for (auto id : d.ds.manifest.train_ids) {
        d.train.images.push_back(&d.ds.examples[id].image);
        d.train.labels.push_back(d.ds.examples[id].label.class_index());
    }
    for (auto id : d.ds.manifest.test_ids) {
        d.test.images.push_back(&d.ds.examples[id].image);
        d.test.labels.push_back(d.ds.examples[id].label.class_index());
    }
    return d;
}

double cnn_accuracy = -1.0;

Outcome desk_end_to_end(const DeskData& data) {
    const auto t0 = Clock::now();
    nn::ShuffleModel model(nn::ArchConfig{}, kArchSeed);
    nn::TrainConfig cfg;
    cfg.epochs = kDeskEpochs;
    const auto history = nn::train(model, data.train, data.test, cfg, [](const nn::EpochStats& s) {
        std::printf("  epoch %2zu  loss %.4f  train_acc %.4f  val_acc %.4f\n", s.epoch, s.train_loss, s.train_acc,
                    s.val_acc);
        std::fflush(stdout);
    });
    cnn_accuracy = nn::accuracy(model, data.test);
    const double elapsed = seconds_since(t0);
    return {cnn_accuracy >= kDeskAccuracy && history.size() <= kDeskEpochs && elapsed < kDeskBudgetS,
            "test accuracy " + fmt("%.4f", cnn_accuracy) + " after " + std::to_string(history.size()) + " epochs, " +
                fmt("%.1f s", elapsed) + " (" + std::to_string(data.train.size()) + " train / " +
                std::to_string(data.test.size()) + " test)"};
}

Outcome classifier_ordering(const DeskData& data) {
    if (cnn_accuracy < 0) return {false, "CNN run unavailable"};
    const auto xtr = baselines::flatten_all(data.train.images);
    const auto xte = baselines::flatten_all(data.test.images);
    const auto nb = baselines::nb_fit(xtr, data.train.labels, signal::kNumClasses);
    const auto svm = baselines::svm_fit(xtr, data.train.labels, signal::kNumClasses, baselines::SvmHyper{});
    std::size_t nb_ok = 0, svm_ok = 0;
    for (std::size_t i = 0; i < xte.size(); ++i) {
        nb_ok += baselines::nb_predict(nb, xte[i]).class_index == data.test.labels[i];
        svm_ok += baselines::svm_predict(svm, xte[i]).class_index == data.test.labels[i];
    }
    const double n = static_cast<double>(xte.size());
    const double nb_acc = nb_ok / n, svm_acc = svm_ok / n;
    return {cnn_accuracy >= svm_acc && cnn_accuracy >= nb_acc,
            "CNN " + fmt("%.4f", cnn_accuracy) + ", linear SVM " + fmt("%.4f", svm_acc) + ", naive Bayes " +
                fmt("%.4f", nb_acc)};
}

// Published matrices, rows actual and columns predicted, in the order below.
const std::vector<std::string> kTableClasses{"BRB1", "BRB2", "BRB3", "BRB4", "HLT"};

struct PublishedModel {
    std::string name;
    std::vector<std::vector<std::size_t>> matrix;
    // precision, recall, f1 per class; negative entries are not compared.
    std::vector<std::array<double, 3>> table;
};

std::vector<PublishedModel> published() {
    constexpr double X = -1.0;
    return {
        {"Inception V2",
         {{1850, 20, 13, 117, 0}, {23, 1867, 104, 6, 0}, {11, 39, 1943, 7, 0}, {11, 24, 63, 1902, 0}, {0, 0, 0, 0, 2000}},
         {{{.98, .93, .95}}, {{.96, .93, .95}}, {{.92, .97, .94}}, {{.94, .95, .94}}, {{1.00, X, X}}}},
        {"ResNet50",
         {{1822, 10, 21, 147, 0}, {29, 1855, 97, 19, 0}, {17, 21, 1947, 15, 0}, {26, 29, 50, 1895, 0}, {0, 0, 0, 0, 2000}},
         {{{.96, .91, .94}}, {{.97, .93, .95}}, {{.92, .97, .95}}, {{.91, .95, .93}}, {{1, 1, 1}}}},
        {"DenseNet121",
         {{1735, 14, 4, 247, 0}, {58, 1828, 83, 31, 0}, {20, 22, 1934, 24, 0}, {16, 14, 48, 1922, 0}, {0, 0, 0, 0, 2000}},
         {{{.95, X, X}}, {{.97, .91, .94}}, {{.93, .97, .95}}, {{.86, .96, .91}}, {{1, 1, 1}}}},
        {"MobileNetV2",
         {{1865, 9, 12, 114, 0}, {44, 1848, 78, 30, 0}, {39, 28, 1913, 20, 0}, {33, 17, 40, 1910, 0}, {0, 0, 0, 0, 2000}},
         {{{.94, .93, .94}}, {{X, X, X}}, {{X, .96, .95}}, {{.92, X, .94}}, {{1, 1, 1}}}},
        {"EfficientNetB0",
         {{1869, 8, 17, 106, 0}, {57, 1822, 82, 39, 0}, {29, 18, 1923, 30, 0}, {29, 14, 41, 1916, 0}, {0, 0, 0, 0, 2000}},
         {{{X, X, .94}}, {{X, X, .94}}, {{.93, .96, .95}}, {{.92, .96, .94}}, {{1, 1, 1}}}},
        {"ShuffleNetV2",
         {{1909, 2, 6, 83, 0}, {7, 1984, 9, 0, 0}, {0, 0, 1994, 6, 0}, {7, 8, 11, 1974, 0}, {0, 0, 0, 0, 2000}},
         {{{.99, .95, .97}}, {{.99, .99, .99}}, {{.99, 1.00, .99}}, {{.96, .99, .97}}, {{1, 1, 1}}}},
    };
}

Outcome metrics_vs_published() {
    bool ok = true;
    std::size_t compared = 0;
    std::string mismatches;
    double inception_acc = 0.0, shuffle_acc = 0.0;
    for (const auto& m : published()) {
        const auto r = eval::metrics(eval::from_counts(m.matrix, kTableClasses));
        for (std::size_t c = 0; c < kTableClasses.size(); ++c) {
            const double got[3] = {r.classes[c].precision, r.classes[c].recall, r.classes[c].f1};
            for (int k = 0; k < 3; ++k) {
                if (m.table[c][k] < 0) continue;
                const double rounded = std::round(got[k] * 100.0) / 100.0;
                ++compared;
                if (std::abs(rounded - m.table[c][k]) > kTableTol) {
                    ok = false;
                    mismatches += " " + m.name + "/" + kTableClasses[c] + "/" + "prf"[k];
                }
            }
        }
        if (m.name == "Inception V2") inception_acc = r.accuracy;
        if (m.name == "ShuffleNetV2") shuffle_acc = r.accuracy;
    }
    ok = ok && inception_acc == 0.9562 && shuffle_acc == 0.9861;
    std::string detail = std::to_string(compared) + " cells, Inception accuracy " + fmt("%.4f", inception_acc) +
                         ", ShuffleNet accuracy " + fmt("%.4f", shuffle_acc) + " (published 0.9885)";
    if (!mismatches.empty()) detail += ", mismatches:" + mismatches;
    return {ok, detail};
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_directory(const std::filesystem::path& a, const std::filesystem::path& b) {
    std::vector<std::string> na, nb;
    for (const auto& e : std::filesystem::directory_iterator(a)) na.push_back(e.path().filename().string());
    for (const auto& e : std::filesystem::directory_iterator(b)) nb.push_back(e.path().filename().string());
    std::sort(na.begin(), na.end());
    std::sort(nb.begin(), nb.end());
    if (na != nb) return false;
    for (const auto& n : na)
        if (read_bytes(a / n) != read_bytes(b / n)) return false;
    return true;
}

Outcome determinism_and_persistence() {
    const auto root = std::filesystem::temp_directory_path() / "mdiag_acceptance";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);

    nn::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    std::string hist[2], model_bytes[2];
    for (int run = 0; run < 2; ++run) {
        const auto data = build_desk(6, 0.5);
        const auto dir = root / ("ds" + std::to_string(run));
        dataset::save_dataset(data.ds, dir);
        nn::ShuffleModel model(nn::ArchConfig{}, kArchSeed);
        const auto history = nn::train(model, data.train, data.test, cfg);
        nn::write_history_csv(history, root / ("hist" + std::to_string(run) + ".csv"));
        nn::save_model(model, root / ("model" + std::to_string(run) + ".mdnn"));
        hist[run] = read_bytes(root / ("hist" + std::to_string(run) + ".csv"));
        model_bytes[run] = read_bytes(root / ("model" + std::to_string(run) + ".mdnn"));
    }
    const bool datasets_equal = same_directory(root / "ds0", root / "ds1");
    const bool reload_equal = [&] {
        const auto a = dataset::load_dataset(root / "ds0");
        const auto b = build_desk(6, 0.5).ds;
        if (a.examples.size() != b.examples.size() || !(a.manifest == b.manifest)) return false;
        for (std::size_t i = 0; i < a.examples.size(); ++i)
            if (!(a.examples[i].image == b.examples[i].image)) return false;
        return true;
    }();

    auto data = build_desk(6, 0.5);
    nn::ShuffleModel model(nn::ArchConfig{}, kArchSeed);
    nn::train(model, data.train, data.test, cfg);
    std::vector<const spectral::ImageTensor*> all;
    for (const auto& e : data.ds.examples) all.push_back(&e.image);
    const auto before = nn::predict_batch(model, all);
    nn::save_model(model, root / "roundtrip.mdnn");
    auto loaded = nn::load_model(root / "roundtrip.mdnn");
    const auto after = nn::predict_batch(loaded, all);
    bool predictions_equal = before.size() == after.size();
    for (std::size_t i = 0; predictions_equal && i < before.size(); ++i)
        predictions_equal = before[i].class_index == after[i].class_index &&
                            before[i].probabilities == after[i].probabilities;

    const bool ok = datasets_equal && reload_equal && hist[0] == hist[1] && model_bytes[0] == model_bytes[1] &&
                    predictions_equal;
    std::ostringstream detail;
    detail << "datasets " << (datasets_equal && reload_equal ? "identical" : "DIFFER") << ", histories "
           << (hist[0] == hist[1] ? "identical" : "DIFFER") << ", model files "
           << (model_bytes[0] == model_bytes[1] ? "identical" : "DIFFER") << ", reload predictions "
           << (predictions_equal ? "bitwise equal" : "DIFFER");
    std::filesystem::remove_all(root);
    return {ok, detail.str()};
}

Outcome brute_force_metrics() {
    std::mt19937_64 rng(1010);
    std::uniform_int_distribution<int> len(1, 100), cls(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = len(rng);
        std::vector<int> y(n), p(n);
        for (int i = 0; i < n; ++i) {
            y[i] = cls(rng);
            p[i] = cls(rng);
        }
        const auto r = eval::metrics(eval::confusion(p, y, 5));
        int correct = 0;
        for (int i = 0; i < n; ++i) correct += p[i] == y[i];
        if (r.accuracy != static_cast<double>(correct) / n) return {false, "accuracy mismatch in trial " + std::to_string(trial)};
        for (int c = 0; c < 5; ++c) {
            int tp = 0, fp = 0, fn = 0;
            for (int i = 0; i < n; ++i) {
                tp += p[i] == c && y[i] == c;
                fp += p[i] == c && y[i] != c;
                fn += p[i] != c && y[i] == c;
            }
            const double prec = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
            const double rec = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
            const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
            const auto& m = r.classes[static_cast<std::size_t>(c)];
            if (m.precision != prec || m.recall != rec || m.f1 != f1 || m.support != static_cast<std::size_t>(tp + fn))
                return {false, "class " + std::to_string(c) + " mismatch in trial " + std::to_string(trial)};
        }
    }
    return {true, "200 random vectors, exact agreement"};
}

}  // namespace

int main() {
    int failures = 0;
    int index = 0;
    const auto report = [&](const std::string& name, const std::function<Outcome()>& fn) {
        ++index;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", index, name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    };

    report("FFT matches the direct DFT", fft_correctness);
    report("STFT equals blockwise DFT magnitudes", stft_blockwise);
    report("BRB sidebands detected at the expected frequencies", sideband_physics);
    report("analytic gradients match central differences", gradient_fidelity);
    report("channel shuffle algebra", shuffle_algebra);

    std::printf("  building desk-scale dataset (5 x %zu, fs %.0f Hz)\n", kPerClass, kDeskSampleRate);
    std::fflush(stdout);
    const auto desk = build_desk(kPerClass, kTrainFraction);
    report("desk-scale training reaches the accuracy target", [&] { return desk_end_to_end(desk); });
    report("CNN beats the linear SVM and naive Bayes", [&] { return classifier_ordering(desk); });
    report("metrics reproduce the published tables", metrics_vs_published);
    report("determinism and persistence", determinism_and_persistence);
    report("metrics agree with brute-force counting", brute_force_metrics);

    std::printf("%d of %d criteria passed\n", index - failures, index);
    return failures == 0 ? 0 : 1;
}
