#pragma once

#include <span>
#include <utility>
#include <vector>

#include "mdiag/nn/tensor.hpp"

namespace mdiag::nn {

enum class Mode { Train, Infer };

/// Grouped 2-D convolution (cross-correlation). weight is
/// (out_channels, in_channels / groups, kernel_h, kernel_w); bias is empty or out_channels long.
struct ConvParams {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
    Param weight;
    Param bias;

    ConvParams() = default;
    ConvParams(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, std::size_t pad,
               std::size_t groups_ = 1, bool with_bias = true);

    std::size_t fan_in() const { return (in_channels / groups) * kernel_h * kernel_w; }
    bool has_bias() const { return !bias.empty(); }
    std::size_t out_size(std::size_t in, std::size_t kernel) const { return (in + 2 * padding - kernel) / stride + 1; }
};

struct BatchNormParams {
    std::size_t channels = 0;
    Param gamma;
    Param beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;

    BatchNormParams() = default;
    explicit BatchNormParams(std::size_t ch);
};

/// Values kept from a Train-mode batchnorm forward for its backward pass.
struct BatchNormCache {
    Tensor4 xhat;
    std::vector<double> inv_std;
    bool batch_stats = false;
};

/// y = W x + b with W stored (out x in) row-major.
struct DenseParams {
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    Param weight;
    Param bias;

    DenseParams() = default;
    DenseParams(std::size_t in, std::size_t out);
};

Tensor4 conv2d(const Tensor4& x, const ConvParams& p);
/// Accumulates dweight/dbias into p and returns dx.
Tensor4 conv2d_backward(const Tensor4& x, ConvParams& p, const Tensor4& dy);

/// Per-channel spatial convolution; requires groups == in_channels == out_channels.
Tensor4 depthwise_conv2d(const Tensor4& x, const ConvParams& p);
Tensor4 depthwise_conv2d_backward(const Tensor4& x, ConvParams& p, const Tensor4& dy);

Tensor4 relu(const Tensor4& x);
/// Passes dy where x > 0.
Tensor4 relu_backward(const Tensor4& x, const Tensor4& dy);

/// Non-overlapping 2x2 max; H and W must be even.
Tensor4 maxpool2x2(const Tensor4& x);
/// Routes each window's gradient to its first maximal element.
Tensor4 maxpool2x2_backward(const Tensor4& x, const Tensor4& dy);

/// Train mode normalises with batch statistics (needs N >= 2) and updates the
/// running averages; Infer mode uses the running averages. cache may be null.
Tensor4 batchnorm(const Tensor4& x, BatchNormParams& p, Mode mode, BatchNormCache* cache = nullptr);
Tensor4 batchnorm_backward(const BatchNormCache& cache, BatchNormParams& p, const Tensor4& dy);

/// Input channel c moves to output channel (c mod g) * (C / g) + c / g.
Tensor4 channel_shuffle(const Tensor4& x, std::size_t groups);
/// Inverse permutation, i.e. channel_shuffle(dy, C / groups).
Tensor4 channel_shuffle_backward(const Tensor4& dy, std::size_t groups);

/// First `at` channels and the remainder.
std::pair<Tensor4, Tensor4> split_channels(const Tensor4& x, std::size_t at);
Tensor4 concat_channels(const Tensor4& a, const Tensor4& b);

/// (N, C, H, W) -> N x C matrix of spatial means.
Matrix global_avg_pool(const Tensor4& x);
Tensor4 global_avg_pool_backward(const Matrix& dy, std::size_t h, std::size_t w);

Matrix dense(const Matrix& x, const DenseParams& p);
/// Accumulates dweight/dbias into p and returns dx.
Matrix dense_backward(const Matrix& x, DenseParams& p, const Matrix& dy);

/// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);

struct LossResult {
    double loss = 0.0;
    Matrix dlogits;
};

/// Mean negative log-likelihood and its gradient (softmax - onehot) / N.
LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Lowest index of the maximum.
std::size_t argmax(std::span<const double> v);

}  // namespace mdiag::nn
