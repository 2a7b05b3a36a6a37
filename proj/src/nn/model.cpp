#include "mdiag/nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "mdiag/binio.hpp"
#include "mdiag/error.hpp"

namespace mdiag::nn {

ConvBn::ConvBn(ConvParams conv_, bool relu, bool depthwise)
    : conv(std::move(conv_)), bn(conv.out_channels), relu_(relu), depthwise_(depthwise) {}

Tensor4 ConvBn::forward(const Tensor4& x, Mode mode) {
    input_ = x;
    Tensor4 z = depthwise_ ? depthwise_conv2d(x, conv) : conv2d(x, conv);
    Tensor4 y = batchnorm(z, bn, mode, &bn_cache_);
    if (!relu_) return y;
    pre_act_ = y;
    return nn::relu(y);
}

Tensor4 ConvBn::backward(const Tensor4& dy) {
    Tensor4 g = relu_ ? relu_backward(pre_act_, dy) : dy;
    g = batchnorm_backward(bn_cache_, bn, g);
    return depthwise_ ? depthwise_conv2d_backward(input_, conv, g) : conv2d_backward(input_, conv, g);
}

namespace {

ConvBn pointwise(std::size_t in, std::size_t out) { return ConvBn(ConvParams(in, out, 1, 1, 0, 1, false), true, false); }

ConvBn depthwise(std::size_t ch, std::size_t stride) {
    return ConvBn(ConvParams(ch, ch, 3, stride, 1, ch, false), false, true);
}

}  // namespace

ShuffleUnit::ShuffleUnit(std::size_t in_channels, std::size_t out_channels, std::size_t stride)
    : in_(in_channels), out_(out_channels), stride_(stride) {
    if (stride != 1 && stride != 2) throw ShapeError("shuffle unit stride must be 1 or 2");
    if (out_channels % 2 != 0) throw ShapeError("shuffle unit output channels must be even");
    const std::size_t branch = out_channels / 2;
    if (stride == 1) {
        if (in_channels != out_channels)
            throw ShapeError("stride-1 shuffle unit must preserve channels (" + std::to_string(in_channels) +
                             " -> " + std::to_string(out_channels) + ")");
        main_pw1 = pointwise(branch, branch);
    } else {
        main_pw1 = pointwise(in_channels, branch);
        proj_dw = depthwise(in_channels, 2);
        proj_pw = pointwise(in_channels, branch);
    }
    main_dw = depthwise(branch, stride);
    main_pw2 = pointwise(branch, branch);
}

Tensor4 ShuffleUnit::forward(const Tensor4& x, Mode mode) {
    if (x.c != in_)
        throw ShapeError("shuffle unit expects " + std::to_string(in_) + " channels, got " + x.shape_string());
    Tensor4 left, right;
    if (stride_ == 1) {
        auto halves = split_channels(x, in_ / 2);
        left = std::move(halves.first);
        right = main_pw2.forward(main_dw.forward(main_pw1.forward(halves.second, mode), mode), mode);
    } else {
        left = proj_pw.forward(proj_dw.forward(x, mode), mode);
        right = main_pw2.forward(main_dw.forward(main_pw1.forward(x, mode), mode), mode);
    }
    Tensor4 joined = concat_channels(left, right);
    return shuffle_enabled ? channel_shuffle(joined, 2) : joined;
}

Tensor4 ShuffleUnit::backward(const Tensor4& dy) {
    Tensor4 g = shuffle_enabled ? channel_shuffle_backward(dy, 2) : dy;
    auto [dleft, dright] = split_channels(g, out_ / 2);
    Tensor4 dmain = main_pw1.backward(main_dw.backward(main_pw2.backward(dright)));
    if (stride_ == 1) return concat_channels(dleft, dmain);
    Tensor4 dproj = proj_dw.backward(proj_pw.backward(dleft));
    for (std::size_t i = 0; i < dproj.size(); ++i) dproj.data[i] += dmain.data[i];
    return dproj;
}

void ArchConfig::validate() const {
    if (in_channels == 0 || in_height == 0 || in_width == 0) throw ShapeError("input dims must be positive");
    if (stem_channels == 0 || final_channels == 0 || num_classes < 2)
        throw ShapeError("stem/final channels must be positive and classes >= 2");
    if (stage_widths.size() != stage_units.size())
        throw ShapeError("stage_widths and stage_units must have the same length");
    for (std::size_t i = 0; i < stage_widths.size(); ++i) {
        if (stage_widths[i] == 0 || stage_widths[i] % 2 != 0) throw ShapeError("stage widths must be even");
        if (stage_units[i] < 1) throw ShapeError("each stage needs at least one unit");
    }
}

ArchConfig tiny_arch() {
    ArchConfig a;
    a.in_channels = 1;
    a.in_height = 8;
    a.in_width = 8;
    a.stem_channels = 4;
    a.stage_widths = {8};
    a.stage_units = {2};
    a.final_channels = 16;
    a.num_classes = 5;
    return a;
}

ShuffleModel::ShuffleModel(const ArchConfig& arch, std::uint64_t seed) : arch_(arch) {
    arch_.validate();
    stem = ConvBn(ConvParams(arch_.in_channels, arch_.stem_channels, 3, 2, 1, 1, false), true, false);
    std::size_t ch = arch_.stem_channels;
    for (std::size_t s = 0; s < arch_.stage_widths.size(); ++s) {
        units.emplace_back(ch, arch_.stage_widths[s], 2);
        ch = arch_.stage_widths[s];
        for (std::size_t u = 1; u < arch_.stage_units[s]; ++u) units.emplace_back(ch, ch, 1);
    }
    final_conv = pointwise(ch, arch_.final_channels);
    head = DenseParams(arch_.final_channels, arch_.num_classes);

    std::mt19937_64 rng(seed);
    for (ConvBn* layer : layers()) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer->conv.fan_in())));
        for (auto& v : layer->conv.weight.value) v = dist(rng);
    }
    std::normal_distribution<double> head_dist(0.0, std::sqrt(1.0 / static_cast<double>(head.in_features)));
    for (auto& v : head.weight.value) v = head_dist(rng);
    zero_grad();
}

std::vector<ConvBn*> ShuffleModel::layers() {
    std::vector<ConvBn*> out{&stem};
    for (auto& u : units) {
        if (u.stride() == 2) {
            out.push_back(&u.proj_dw);
            out.push_back(&u.proj_pw);
        }
        out.push_back(&u.main_pw1);
        out.push_back(&u.main_dw);
        out.push_back(&u.main_pw2);
    }
    out.push_back(&final_conv);
    return out;
}

std::vector<ParamRef> ShuffleModel::parameters() {
    std::vector<ParamRef> out;
    auto add_layer = [&](const std::string& prefix, ConvBn& l) {
        out.push_back({prefix + ".conv.weight", &l.conv.weight});
        if (l.conv.has_bias()) out.push_back({prefix + ".conv.bias", &l.conv.bias});
        out.push_back({prefix + ".bn.gamma", &l.bn.gamma});
        out.push_back({prefix + ".bn.beta", &l.bn.beta});
    };
    add_layer("stem", stem);
    for (std::size_t i = 0; i < units.size(); ++i) {
        const std::string prefix = "units." + std::to_string(i) + ".";
        auto& u = units[i];
        if (u.stride() == 2) {
            add_layer(prefix + "proj_dw", u.proj_dw);
            add_layer(prefix + "proj_pw", u.proj_pw);
        }
        add_layer(prefix + "main_pw1", u.main_pw1);
        add_layer(prefix + "main_dw", u.main_dw);
        add_layer(prefix + "main_pw2", u.main_pw2);
    }
    add_layer("final", final_conv);
    out.push_back({"head.weight", &head.weight});
    out.push_back({"head.bias", &head.bias});
    return out;
}

std::size_t ShuffleModel::parameter_count() {
    std::size_t total = 0;
    for (const auto& ref : parameters()) total += ref.param->size();
    return total;
}

std::vector<std::vector<double>*> ShuffleModel::buffers() {
    std::vector<std::vector<double>*> out;
    for (ConvBn* l : layers()) {
        out.push_back(&l->bn.running_mean);
        out.push_back(&l->bn.running_var);
    }
    return out;
}

void ShuffleModel::zero_grad() {
    for (auto& ref : parameters()) ref.param->zero_grad();
}

Matrix ShuffleModel::forward(const Tensor4& batch, Mode mode) {
    if (batch.c != arch_.in_channels || batch.h != arch_.in_height || batch.w != arch_.in_width || batch.n == 0) {
        throw ShapeError("model expects (N, " + std::to_string(arch_.in_channels) + ", " +
                         std::to_string(arch_.in_height) + ", " + std::to_string(arch_.in_width) + "), got " +
                         batch.shape_string());
    }
    Tensor4 x = stem.forward(batch, mode);
    for (auto& u : units) x = u.forward(x, mode);
    x = final_conv.forward(x, mode);
    final_h_ = x.h;
    final_w_ = x.w;
    pooled_ = global_avg_pool(x);
    return dense(pooled_, head);
}

void ShuffleModel::backward(const Matrix& dlogits) {
    Matrix dpooled = dense_backward(pooled_, head, dlogits);
    Tensor4 g = global_avg_pool_backward(dpooled, final_h_, final_w_);
    g = final_conv.backward(g);
    for (auto it = units.rbegin(); it != units.rend(); ++it) g = it->backward(g);
    stem.backward(g);
}

Tensor4 to_batch(std::span<const spectral::ImageTensor* const> images, const ArchConfig& arch) {
    Tensor4 x(images.size(), arch.in_channels, arch.in_height, arch.in_width);
    const std::size_t per = arch.in_channels * arch.in_height * arch.in_width;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& img = *images[i];
        if (img.channels != arch.in_channels || img.height != arch.in_height || img.width != arch.in_width) {
            throw ShapeError("image (" + std::to_string(img.channels) + ", " + std::to_string(img.height) + ", " +
                             std::to_string(img.width) + ") does not match model input (" +
                             std::to_string(arch.in_channels) + ", " + std::to_string(arch.in_height) + ", " +
                             std::to_string(arch.in_width) + ")");
        }
        std::copy(img.values.begin(), img.values.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return x;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    // batchnorm needs two examples per Train-mode batch
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

bool all_finite(ShuffleModel& model) {
    for (const auto& ref : model.parameters())
        for (double v : ref.param->value)
            if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

double epoch_learning_rate(const TrainConfig& cfg, std::size_t epoch) {
    if (cfg.lr_schedule == "constant" || cfg.epochs == 0) return cfg.learning_rate;
    const double t = static_cast<double>(epoch - 1) / static_cast<double>(cfg.epochs);
    return 0.5 * cfg.learning_rate * (1.0 + std::cos(std::numbers::pi * t));
}

std::vector<EpochStats> train(ShuffleModel& model, const LabeledImages& train_set, const LabeledImages& val_set,
                              const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (train_set.size() == 0) throw DomainError("training set is empty");
    if (train_set.labels.size() != train_set.size()) throw ShapeError("training labels/images length mismatch");
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
        throw ConfigError("learning rate must be finite and >= 0");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (cfg.lr_schedule != "cosine" && cfg.lr_schedule != "constant")
        throw ConfigError("unknown lr_schedule '" + cfg.lr_schedule + "' (expected cosine or constant)");

    auto params = model.parameters();
    std::vector<std::vector<double>> velocity;
    velocity.reserve(params.size());
    for (const auto& ref : params) velocity.emplace_back(ref.param->size(), 0.0);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochStats> history;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = epoch_learning_rate(cfg, epoch);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (const auto& batch_idx : make_batches(order, cfg.batch_size)) {
            std::vector<const spectral::ImageTensor*> imgs;
            std::vector<int> labels;
            for (std::size_t i : batch_idx) {
                imgs.push_back(train_set.images[i]);
                labels.push_back(train_set.labels[i]);
            }
            const Tensor4 x = to_batch(imgs, model.arch());
            const Mode mode = batch_idx.size() >= 2 ? Mode::Train : Mode::Infer;
            const Matrix logits = model.forward(x, mode);
            const auto [loss, dlogits] = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(loss))
                throw TrainingError("non-finite loss in epoch " + std::to_string(epoch), static_cast<int>(epoch));
            model.zero_grad();
            model.backward(dlogits);
            for (std::size_t p = 0; p < params.size(); ++p) {
                auto& value = params[p].param->value;
                const auto& grad = params[p].param->grad;
                auto& vel = velocity[p];
                for (std::size_t i = 0; i < value.size(); ++i) {
                    vel[i] = cfg.momentum * vel[i] - lr * grad[i];
                    value[i] += vel[i];
                }
            }
            loss_sum += loss * static_cast<double>(batch_idx.size());
            for (std::size_t r = 0; r < logits.rows; ++r) {
                const std::span<const double> row(logits.data.data() + r * logits.cols, logits.cols);
                if (static_cast<int>(argmax(row)) == labels[r]) ++correct;
            }
        }
        if (!all_finite(model))
            throw TrainingError("non-finite parameters after epoch " + std::to_string(epoch), static_cast<int>(epoch));
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(train_set.size());
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        stats.val_acc = accuracy(model, val_set);
        history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return history;
}

std::vector<Prediction> predict_batch(ShuffleModel& model, std::span<const spectral::ImageTensor* const> images,
                                      std::size_t batch_size) {
    std::vector<Prediction> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const std::size_t end = std::min(images.size(), start + batch_size);
        const Tensor4 x = to_batch(images.subspan(start, end - start), model.arch());
        const Matrix probs = softmax(model.forward(x, Mode::Infer));
        for (std::size_t r = 0; r < probs.rows; ++r) {
            Prediction p;
            p.probabilities.assign(probs.data.begin() + static_cast<std::ptrdiff_t>(r * probs.cols),
                                   probs.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * probs.cols));
            p.class_index = static_cast<int>(argmax(p.probabilities));
            out.push_back(std::move(p));
        }
    }
    return out;
}

Prediction predict(ShuffleModel& model, const spectral::ImageTensor& image) {
    const spectral::ImageTensor* ptr = &image;
    return predict_batch(model, std::span<const spectral::ImageTensor* const>(&ptr, 1)).front();
}

double accuracy(ShuffleModel& model, const LabeledImages& set, std::size_t batch_size) {
    if (set.size() == 0) return 0.0;
    const auto preds = predict_batch(model, set.images, batch_size);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i].class_index == set.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(set.size());
}

namespace {
constexpr const char* kModelMagic = "MDNN";
}

void save_model(ShuffleModel& model, const std::filesystem::path& path) {
    const ArchConfig& a = model.arch();
    binio::Writer w;
    w.magic(kModelMagic);
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(a.in_channels));
    w.u32(static_cast<std::uint32_t>(a.in_height));
    w.u32(static_cast<std::uint32_t>(a.in_width));
    w.u32(static_cast<std::uint32_t>(a.stem_channels));
    w.u32(static_cast<std::uint32_t>(a.stage_widths.size()));
    for (auto v : a.stage_widths) w.u32(static_cast<std::uint32_t>(v));
    for (auto v : a.stage_units) w.u32(static_cast<std::uint32_t>(v));
    w.u32(static_cast<std::uint32_t>(a.final_channels));
    w.u32(static_cast<std::uint32_t>(a.num_classes));
    w.u64(model.parameter_count());
    for (const auto& ref : model.parameters()) w.f64s(ref.param->value);
    for (const auto* buf : model.buffers()) w.f64s(*buf);
    w.flush(path);
}

ShuffleModel load_model(const std::filesystem::path& path) {
    auto r = binio::Reader::open(path);
    const std::string magic = r.magic();
    if (magic != kModelMagic) throw FormatError(path.string() + ": bad magic '" + magic + "', expected MDNN");
    const std::uint32_t version = r.u32();
    if (version != kModelFormatVersion)
        throw FormatError(path.string() + ": unsupported model format version " + std::to_string(version) +
                          " (supported: " + std::to_string(kModelFormatVersion) + ")");
    ArchConfig a;
    a.in_channels = r.u32();
    a.in_height = r.u32();
    a.in_width = r.u32();
    a.stem_channels = r.u32();
    const std::uint32_t stages = r.u32();
    if (stages > 64) throw FormatError(path.string() + ": implausible stage count");
    a.stage_widths.resize(stages);
    a.stage_units.resize(stages);
    for (auto& v : a.stage_widths) v = r.u32();
    for (auto& v : a.stage_units) v = r.u32();
    a.final_channels = r.u32();
    a.num_classes = r.u32();
    const std::uint64_t count = r.u64();
    try {
        a.validate();
    } catch (const ShapeError& e) {
        throw FormatError(path.string() + ": invalid architecture: " + e.what());
    }
    ShuffleModel model(a, 0);
    if (count != model.parameter_count())
        throw FormatError(path.string() + ": parameter count " + std::to_string(count) + " does not match architecture");
    for (const auto& ref : model.parameters()) r.f64s(ref.param->value);
    for (auto* buf : model.buffers()) r.f64s(*buf);
    r.expect_end();
    return model;
}

void write_history_csv(std::span<const EpochStats> history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "epoch,train_loss,train_acc,val_acc\n";
    for (const auto& h : history)
        out << h.epoch << ',' << h.train_loss << ',' << h.train_acc << ',' << h.val_acc << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mdiag::nn
