#include "mdiag/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "mdiag/binio.hpp"
#include "mdiag/error.hpp"
#include "mdiag/nn/ops.hpp"

namespace mdiag::baselines {

std::vector<double> flatten(const spectral::ImageTensor& image) {
    return {image.values.begin(), image.values.end()};
}

FeatureRows flatten_all(std::span<const spectral::ImageTensor* const> images) {
    FeatureRows rows;
    rows.reserve(images.size());
    for (const auto* img : images) rows.push_back(flatten(*img));
    return rows;
}

namespace {

std::size_t check_rows(const FeatureRows& x, std::span<const int> y, std::size_t num_classes) {
    if (x.size() != y.size())
        throw ShapeError("feature rows (" + std::to_string(x.size()) + ") and labels (" + std::to_string(y.size()) +
                         ") differ in length");
    if (x.empty()) throw DomainError("no training examples");
    const std::size_t d = x.front().size();
    for (const auto& row : x)
        if (row.size() != d) throw ShapeError("feature rows have inconsistent lengths");
    for (int label : y)
        if (label < 0 || static_cast<std::size_t>(label) >= num_classes)
            throw DomainError("label " + std::to_string(label) + " outside 0.." + std::to_string(num_classes - 1));
    return d;
}

void check_features(std::size_t expected, std::size_t got) {
    if (expected != got)
        throw ShapeError("model expects " + std::to_string(expected) + " features, got " + std::to_string(got));
}

ScoredPrediction pick(std::vector<double> scores) {
    ScoredPrediction p;
    p.class_index = static_cast<int>(nn::argmax(scores));
    p.scores = std::move(scores);
    return p;
}

}  // namespace

NBModel nb_fit(const FeatureRows& x, std::span<const int> y, std::size_t num_classes) {
    const std::size_t d = check_rows(x, y, num_classes);
    NBModel m;
    m.num_features = d;
    m.priors.assign(num_classes, 0.0);
    m.means.assign(num_classes, std::vector<double>(d, 0.0));
    m.variances.assign(num_classes, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(num_classes, 0);

    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto c = static_cast<std::size_t>(y[i]);
        ++counts[c];
        for (std::size_t j = 0; j < d; ++j) m.means[c][j] += x[i][j];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) throw DomainError("class " + std::to_string(c) + " has no training examples");
        for (auto& v : m.means[c]) v /= static_cast<double>(counts[c]);
        m.priors[c] = static_cast<double>(counts[c]) / static_cast<double>(x.size());
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto c = static_cast<std::size_t>(y[i]);
        for (std::size_t j = 0; j < d; ++j) {
            const double e = x[i][j] - m.means[c][j];
            m.variances[c][j] += e * e;
        }
    }
    for (std::size_t c = 0; c < num_classes; ++c)
        for (auto& v : m.variances[c]) v = std::max(v / static_cast<double>(counts[c]), kVarianceFloor);
    return m;
}

ScoredPrediction nb_predict(const NBModel& model, std::span<const double> features) {
    check_features(model.num_features, features.size());
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    std::vector<double> scores(model.num_classes());
    for (std::size_t c = 0; c < model.num_classes(); ++c) {
        double s = std::log(model.priors[c]);
        const auto& mu = model.means[c];
        const auto& var = model.variances[c];
        for (std::size_t j = 0; j < features.size(); ++j) {
            const double e = features[j] - mu[j];
            s -= 0.5 * (log_2pi + std::log(var[j]) + e * e / var[j]);
        }
        scores[c] = s;
    }
    return pick(std::move(scores));
}

LinearSVMModel svm_fit(const FeatureRows& x, std::span<const int> y, std::size_t num_classes,
                       const SvmHyper& hyper) {
    const std::size_t d = check_rows(x, y, num_classes);
    if (!(hyper.c > 0.0) || !std::isfinite(hyper.c)) throw ConfigError("SVM C must be finite and > 0");
    if (!(hyper.learning_rate >= 0.0) || !std::isfinite(hyper.learning_rate))
        throw ConfigError("SVM learning rate must be finite and >= 0");
    std::vector<bool> present(num_classes, false);
    for (int label : y) present[static_cast<std::size_t>(label)] = true;
    if (std::count(present.begin(), present.end(), true) < 2)
        throw DomainError("SVM training needs examples from at least two classes");

    LinearSVMModel m;
    m.num_features = d;
    m.hyper = hyper;
    m.weights.assign(num_classes, std::vector<double>(d, 0.0));
    m.biases.assign(num_classes, 0.0);

    const double lambda = 1.0 / (hyper.c * static_cast<double>(x.size()));
    const double lr = hyper.learning_rate;
    std::mt19937_64 rng(hyper.seed);
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i : order) {
            const auto& xi = x[i];
            for (std::size_t c = 0; c < num_classes; ++c) {
                auto& w = m.weights[c];
                const double target = y[i] == static_cast<int>(c) ? 1.0 : -1.0;
                const double margin = target * (std::inner_product(w.begin(), w.end(), xi.begin(), 0.0) + m.biases[c]);
                const double shrink = 1.0 - lr * lambda;
                if (margin < 1.0) {
                    for (std::size_t j = 0; j < d; ++j) w[j] = shrink * w[j] + lr * target * xi[j];
                    m.biases[c] += lr * target;
                } else {
                    for (auto& v : w) v *= shrink;
                }
            }
        }
    }
    for (const auto& w : m.weights)
        for (double v : w)
            if (!std::isfinite(v)) throw TrainingError("SVM weights became non-finite", 0);
    return m;
}

ScoredPrediction svm_predict(const LinearSVMModel& model, std::span<const double> features) {
    check_features(model.num_features, features.size());
    std::vector<double> scores(model.num_classes());
    for (std::size_t c = 0; c < model.num_classes(); ++c) {
        const auto& w = model.weights[c];
        scores[c] = std::inner_product(w.begin(), w.end(), features.begin(), 0.0) + model.biases[c];
    }
    return pick(std::move(scores));
}

namespace {

void write_header(binio::Writer& w, const char* magic, std::size_t k, std::size_t d) {
    w.magic(magic);
    w.u32(kBaselineFormatVersion);
    w.u64(k);
    w.u64(d);
}

std::pair<std::size_t, std::size_t> read_header(binio::Reader& r, const char* magic) {
    const auto got = r.magic();
    if (got != magic) throw FormatError(r.source() + ": bad magic '" + got + "', expected " + magic);
    const auto version = r.u32();
    if (version != kBaselineFormatVersion)
        throw FormatError(r.source() + ": unsupported model format version " + std::to_string(version));
    const auto k = r.u64();
    const auto d = r.u64();
    if (k < 1 || k > 1024 || d < 1 || d > (1u << 24)) throw FormatError(r.source() + ": implausible model dims");
    return {static_cast<std::size_t>(k), static_cast<std::size_t>(d)};
}

}  // namespace

void save_nb(const NBModel& model, const std::filesystem::path& path) {
    binio::Writer w;
    write_header(w, "MDNB", model.num_classes(), model.num_features);
    w.f64s(model.priors);
    for (const auto& m : model.means) w.f64s(m);
    for (const auto& v : model.variances) w.f64s(v);
    w.flush(path);
}

NBModel load_nb(const std::filesystem::path& path) {
    auto r = binio::Reader::open(path);
    const auto [k, d] = read_header(r, "MDNB");
    NBModel m;
    m.num_features = d;
    m.priors.resize(k);
    r.f64s(m.priors);
    m.means.assign(k, std::vector<double>(d));
    m.variances.assign(k, std::vector<double>(d));
    for (auto& v : m.means) r.f64s(v);
    for (auto& v : m.variances) r.f64s(v);
    r.expect_end();
    for (const auto& v : m.variances)
        for (double x : v)
            if (!(x >= kVarianceFloor)) throw FormatError(path.string() + ": variance below floor");
    return m;
}

void save_svm(const LinearSVMModel& model, const std::filesystem::path& path) {
    binio::Writer w;
    write_header(w, "MDSV", model.num_classes(), model.num_features);
    w.f64(model.hyper.c);
    w.u64(model.hyper.epochs);
    w.f64(model.hyper.learning_rate);
    w.u64(model.hyper.seed);
    for (const auto& wc : model.weights) w.f64s(wc);
    w.f64s(model.biases);
    w.flush(path);
}

LinearSVMModel load_svm(const std::filesystem::path& path) {
    auto r = binio::Reader::open(path);
    const auto [k, d] = read_header(r, "MDSV");
    LinearSVMModel m;
    m.num_features = d;
    m.hyper.c = r.f64();
    m.hyper.epochs = r.u64();
    m.hyper.learning_rate = r.f64();
    m.hyper.seed = r.u64();
    m.weights.assign(k, std::vector<double>(d));
    for (auto& v : m.weights) r.f64s(v);
    m.biases.resize(k);
    r.f64s(m.biases);
    r.expect_end();
    return m;
}

}  // namespace mdiag::baselines
