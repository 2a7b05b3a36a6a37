#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mdiag/spectral.hpp"

namespace mdiag::baselines {

/// One flattened example per row.
using FeatureRows = std::vector<std::vector<double>>;

/// Row-major flattening of an image into a feature vector.
std::vector<double> flatten(const spectral::ImageTensor& image);
FeatureRows flatten_all(std::span<const spectral::ImageTensor* const> images);

struct ScoredPrediction {
    int class_index = 0;
    std::vector<double> scores;
};

inline constexpr double kVarianceFloor = 1e-6;

/// Gaussian naive Bayes.
struct NBModel {
    std::size_t num_features = 0;
    std::vector<double> priors;                  ///< sums to 1
    std::vector<std::vector<double>> means;      ///< [class][feature]
    std::vector<std::vector<double>> variances;  ///< [class][feature], >= kVarianceFloor

    std::size_t num_classes() const { return priors.size(); }
};

/// Throws DomainError if any of the num_classes classes has no example.
NBModel nb_fit(const FeatureRows& x, std::span<const int> y, std::size_t num_classes);
/// scores are log-posteriors up to a shared constant.
ScoredPrediction nb_predict(const NBModel& model, std::span<const double> features);

struct SvmHyper {
    double c = 1.0;
    std::size_t epochs = 20;
    double learning_rate = 0.01;
    std::uint64_t seed = 1;
};

/// One-vs-rest linear SVM.
struct LinearSVMModel {
    std::size_t num_features = 0;
    std::vector<std::vector<double>> weights;  ///< [class][feature]
    std::vector<double> biases;
    SvmHyper hyper;

    std::size_t num_classes() const { return biases.size(); }
};

/// Per-sample subgradient descent on lambda/2 |w|^2 + mean hinge, lambda = 1 / (C n),
/// from zero weights over a seeded per-epoch shuffle. Throws DomainError when fewer
/// than two classes are present.
LinearSVMModel svm_fit(const FeatureRows& x, std::span<const int> y, std::size_t num_classes,
                       const SvmHyper& hyper = {});
/// scores[c] = w_c . x + b_c
ScoredPrediction svm_predict(const LinearSVMModel& model, std::span<const double> features);

inline constexpr std::uint32_t kBaselineFormatVersion = 1;

void save_nb(const NBModel& model, const std::filesystem::path& path);
NBModel load_nb(const std::filesystem::path& path);
void save_svm(const LinearSVMModel& model, const std::filesystem::path& path);
LinearSVMModel load_svm(const std::filesystem::path& path);

}  // namespace mdiag::baselines
