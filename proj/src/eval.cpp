#include "mdiag/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mdiag/error.hpp"

namespace mdiag::eval {

using nlohmann::json;

std::size_t ConfusionMatrix::total() const {
    std::size_t t = 0;
    for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
    return t;
}

std::size_t ConfusionMatrix::trace() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
}

namespace {

std::vector<std::string> resolve_names(std::vector<std::string> names, std::size_t k) {
    if (names.empty()) {
        for (std::size_t i = 0; i < k; ++i) names.push_back("class_" + std::to_string(i));
    }
    if (names.size() != k)
        throw ShapeError(std::to_string(names.size()) + " class names given for " + std::to_string(k) + " classes");
    return names;
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, std::size_t num_classes,
                          std::vector<std::string> class_names) {
    if (predictions.size() != labels.size())
        throw ShapeError("predictions (" + std::to_string(predictions.size()) + ") and labels (" +
                         std::to_string(labels.size()) + ") differ in length");
    if (num_classes == 0) throw DomainError("confusion matrix needs at least one class");
    ConfusionMatrix cm;
    cm.class_names = resolve_names(std::move(class_names), num_classes);
    cm.counts.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    const auto k = static_cast<int>(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int a = labels[i];
        const int p = predictions[i];
        if (a < 0 || a >= k || p < 0 || p >= k)
            throw DomainError("class index out of range at position " + std::to_string(i) + " (label " +
                              std::to_string(a) + ", prediction " + std::to_string(p) + ")");
        ++cm.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)];
    }
    return cm;
}

ConfusionMatrix from_counts(std::vector<std::vector<std::size_t>> counts, std::vector<std::string> class_names) {
    for (const auto& row : counts)
        if (row.size() != counts.size()) throw ShapeError("confusion matrix must be square");
    ConfusionMatrix cm;
    cm.class_names = resolve_names(std::move(class_names), counts.size());
    cm.counts = std::move(counts);
    return cm;
}

double ClassReport::macro_f1() const {
    if (classes.empty()) return 0.0;
    double s = 0.0;
    for (const auto& c : classes) s += c.f1;
    return s / static_cast<double>(classes.size());
}

ClassReport metrics(const ConfusionMatrix& cm) {
    const std::size_t k = cm.num_classes();
    const std::size_t total = cm.total();
    if (k == 0 || total == 0) throw DomainError("metrics of an all-zero confusion matrix are undefined");

    ClassReport r;
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t tp = cm.counts[c][c];
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += cm.counts[c][j];
            col += cm.counts[j][c];
        }
        ClassMetrics m;
        m.name = cm.class_names[c];
        m.support = row;
        if (col == 0)
            r.warnings.push_back(m.name + ": precision undefined (no predictions), set to 0");
        else
            m.precision = static_cast<double>(tp) / static_cast<double>(col);
        if (row == 0)
            r.warnings.push_back(m.name + ": recall undefined (no support), set to 0");
        else
            m.recall = static_cast<double>(tp) / static_cast<double>(row);
        if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        r.classes.push_back(std::move(m));
    }
    return r;
}

std::string report_text(const ClassReport& report) {
    std::size_t name_w = 5;
    for (const auto& c : report.classes) name_w = std::max(name_w, c.name.size());
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-*s  %9s  %9s  %9s  %7s\n", static_cast<int>(name_w), "class", "precision",
                  "recall", "f1", "support");
    out << buf;
    for (const auto& c : report.classes) {
        std::snprintf(buf, sizeof buf, "%-*s  %9.4f  %9.4f  %9.4f  %7zu\n", static_cast<int>(name_w), c.name.c_str(),
                      c.precision, c.recall, c.f1, c.support);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "accuracy  %.4f\nmacro f1  %.4f\n", report.accuracy, report.macro_f1());
    out << buf;
    return out.str();
}

std::string confusion_text(const ConfusionMatrix& cm) {
    std::size_t w = 6;
    for (const auto& n : cm.class_names) w = std::max(w, n.size());
    for (const auto& row : cm.counts)
        for (auto v : row) w = std::max(w, std::to_string(v).size());
    std::ostringstream out;
    out << std::string(w, ' ');
    for (const auto& n : cm.class_names) out << "  " << std::string(w - n.size(), ' ') << n;
    out << '\n';
    for (std::size_t i = 0; i < cm.num_classes(); ++i) {
        out << cm.class_names[i] << std::string(w - cm.class_names[i].size(), ' ');
        for (auto v : cm.counts[i]) {
            const auto s = std::to_string(v);
            out << "  " << std::string(w - s.size(), ' ') << s;
        }
        out << '\n';
    }
    return out.str();
}

std::string report_json(const ClassReport& report) {
    json classes = json::array();
    for (const auto& c : report.classes)
        classes.push_back(
            {{"name", c.name}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
    json j;
    j["accuracy"] = report.accuracy;
    j["classes"] = std::move(classes);
    return j.dump(2) + "\n";
}

ClassReport report_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        ClassReport r;
        r.accuracy = j.at("accuracy").get<double>();
        for (const auto& c : j.at("classes")) {
            ClassMetrics m;
            m.name = c.at("name").get<std::string>();
            m.precision = c.at("precision").get<double>();
            m.recall = c.at("recall").get<double>();
            m.f1 = c.at("f1").get<double>();
            m.support = c.at("support").get<std::size_t>();
            r.classes.push_back(std::move(m));
        }
        return r;
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("report JSON: ") + e.what(), 0);
    } catch (const json::exception& e) {
        throw ParseError(std::string("report JSON schema: ") + e.what(), 0);
    }
}

}  // namespace mdiag::eval
