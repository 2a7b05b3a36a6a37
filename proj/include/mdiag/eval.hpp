#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mdiag::eval {

/// counts[actual][predicted].
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t num_classes() const { return counts.size(); }
    std::size_t total() const;
    std::size_t trace() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Names default to "class_<i>" when none are given.
ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, std::size_t num_classes,
                          std::vector<std::string> class_names = {});
ConfusionMatrix from_counts(std::vector<std::vector<std::size_t>> counts, std::vector<std::string> class_names = {});

struct ClassMetrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
    bool operator==(const ClassMetrics&) const = default;
};

struct ClassReport {
    double accuracy = 0.0;
    std::vector<ClassMetrics> classes;
    /// One line per zero denominator that was replaced by 0. Not serialized.
    std::vector<std::string> warnings;

    double macro_f1() const;
};

/// Throws DomainError on an all-zero matrix.
ClassReport metrics(const ConfusionMatrix& cm);

/// Fixed-width table with 4 decimal places, classes in matrix order.
std::string report_text(const ClassReport& report);
std::string confusion_text(const ConfusionMatrix& cm);

/// {"accuracy": a, "classes": [{"name", "precision", "recall", "f1", "support"}]}
std::string report_json(const ClassReport& report);
/// Throws ParseError on malformed input.
ClassReport report_from_json(const std::string& text);

}  // namespace mdiag::eval
