#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mdiag/nn/ops.hpp"
#include "mdiag/spectral.hpp"

namespace mdiag::nn {

/// conv -> batchnorm -> optional ReLU, with the activations needed for backward.
class ConvBn {
public:
    ConvBn() = default;
    ConvBn(ConvParams conv, bool relu, bool depthwise);

    Tensor4 forward(const Tensor4& x, Mode mode);
    Tensor4 backward(const Tensor4& dy);

    ConvParams conv;
    BatchNormParams bn;

private:
    bool relu_ = true;
    bool depthwise_ = false;
    Tensor4 input_;
    Tensor4 pre_act_;
    BatchNormCache bn_cache_;
};

/// ShuffleNetV2 building block.
///
/// stride 1: the input is split in half; the first half passes through, the second
/// goes through 1x1 conv-BN-ReLU, 3x3 depthwise-BN, 1x1 conv-BN-ReLU. The halves are
/// concatenated and shuffled with two groups. Shape is preserved.
///
/// stride 2: the whole input feeds both a projection branch (3x3 depthwise stride
/// 2-BN, 1x1 conv-BN-ReLU) and the main branch (as above with a stride-2 depthwise).
/// Each branch emits out_channels / 2 channels at ceil(H/2) x ceil(W/2).
class ShuffleUnit {
public:
    ShuffleUnit() = default;
    ShuffleUnit(std::size_t in_channels, std::size_t out_channels, std::size_t stride);

    Tensor4 forward(const Tensor4& x, Mode mode);
    Tensor4 backward(const Tensor4& dy);

    std::size_t in_channels() const { return in_; }
    std::size_t out_channels() const { return out_; }
    std::size_t stride() const { return stride_; }

    /// Test hook: disables the final channel shuffle.
    bool shuffle_enabled = true;

    ConvBn main_pw1, main_dw, main_pw2;
    ConvBn proj_dw, proj_pw;  ///< only used when stride == 2

private:
    std::size_t in_ = 0, out_ = 0, stride_ = 1;
};

struct ArchConfig {
    std::size_t in_channels = 1;
    std::size_t in_height = 64;
    std::size_t in_width = 64;
    std::size_t stem_channels = 16;
    std::vector<std::size_t> stage_widths{32, 64, 128};
    /// Units per stage; the first unit of each stage has stride 2.
    std::vector<std::size_t> stage_units{3, 3, 3};
    std::size_t final_channels = 256;
    std::size_t num_classes = 5;

    void validate() const;
    bool operator==(const ArchConfig&) const = default;
};

/// Two-unit configuration used for gradient checks: 1x8x8 input, stem 4 ch,
/// one stage of width 8 (stride-2 + stride-1 unit), final 16 ch.
ArchConfig tiny_arch();

struct ParamRef {
    std::string name;
    Param* param;
};

/// stem 3x3/2 conv-BN-ReLU -> shuffle stages -> 1x1 conv-BN-ReLU -> global
/// average pool -> dense head emitting raw logits.
class ShuffleModel {
public:
    ShuffleModel() = default;
    /// Parameters are Kaiming-normal (fan-in) for convolutions, LeCun-normal for the head.
    ShuffleModel(const ArchConfig& arch, std::uint64_t seed);

    const ArchConfig& arch() const { return arch_; }

    /// (N, C, H, W) -> N x num_classes logits.
    Matrix forward(const Tensor4& batch, Mode mode);
    /// Accumulates parameter gradients for the most recent forward. Call zero_grad first.
    void backward(const Matrix& dlogits);

    void zero_grad();
    std::vector<ParamRef> parameters();
    std::size_t parameter_count();
    /// Every conv-BN block in declaration order.
    std::vector<ConvBn*> layers();
    /// Running mean/var of every batchnorm layer in declaration order.
    std::vector<std::vector<double>*> buffers();

    ConvBn stem;
    std::vector<ShuffleUnit> units;
    ConvBn final_conv;
    DenseParams head;

private:
    ArchConfig arch_;
    std::size_t final_h_ = 0, final_w_ = 0;
    Matrix pooled_;
};

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::uint64_t seed = 1;
    std::string weight_init = "kaiming";
    /// "cosine" anneals from learning_rate towards zero over the run; "constant" holds it.
    std::string lr_schedule = "cosine";
};

/// Learning rate used throughout the given 1-based epoch.
double epoch_learning_rate(const TrainConfig& cfg, std::size_t epoch);

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct LabeledImages {
    std::vector<const spectral::ImageTensor*> images;
    std::vector<int> labels;
    std::size_t size() const { return images.size(); }
};

/// Stacks images into an (N, C, H, W) tensor; throws ShapeError if they disagree with arch.
Tensor4 to_batch(std::span<const spectral::ImageTensor* const> images, const ArchConfig& arch);

using EpochCallback = std::function<void(const EpochStats&)>;

/// SGD with momentum over seeded per-epoch shuffles. A trailing batch of one
/// example joins the previous batch; a dataset of one example trains with
/// batchnorm in Infer mode. Throws TrainingError on a non-finite loss.
std::vector<EpochStats> train(ShuffleModel& model, const LabeledImages& train_set, const LabeledImages& val_set,
                              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Infer-mode accuracy; 0 for an empty set.
double accuracy(ShuffleModel& model, const LabeledImages& set, std::size_t batch_size = 64);

struct Prediction {
    int class_index = 0;
    std::vector<double> probabilities;
};

Prediction predict(ShuffleModel& model, const spectral::ImageTensor& image);
std::vector<Prediction> predict_batch(ShuffleModel& model, std::span<const spectral::ImageTensor* const> images,
                                      std::size_t batch_size = 64);

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(ShuffleModel& model, const std::filesystem::path& path);
/// Throws FormatError on bad magic, unsupported version or truncation.
ShuffleModel load_model(const std::filesystem::path& path);

void write_history_csv(std::span<const EpochStats> history, const std::filesystem::path& path);

}  // namespace mdiag::nn
