#include "mdiag/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mdiag/error.hpp"

namespace mdiag::nn {

std::string Tensor4::shape_string() const {
    std::ostringstream s;
    s << '(' << n << ", " << c << ", " << h << ", " << w << ')';
    return s.str();
}

ConvParams::ConvParams(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, std::size_t pad,
                       std::size_t groups_, bool with_bias)
    : in_channels(in),
      out_channels(out),
      kernel_h(kernel),
      kernel_w(kernel),
      stride(stride_),
      padding(pad),
      groups(groups_) {
    if (groups == 0 || in % groups != 0 || out % groups != 0)
        throw ShapeError("conv channels (" + std::to_string(in) + " -> " + std::to_string(out) +
                         ") not divisible by groups " + std::to_string(groups));
    if (stride == 0 || kernel == 0) throw ShapeError("conv stride and kernel must be >= 1");
    weight = Param(out * (in / groups) * kernel * kernel);
    if (with_bias) bias = Param(out);
}

BatchNormParams::BatchNormParams(std::size_t ch)
    : channels(ch), gamma(ch, 1.0), beta(ch, 0.0), running_mean(ch, 0.0), running_var(ch, 1.0) {}

DenseParams::DenseParams(std::size_t in, std::size_t out)
    : in_features(in), out_features(out), weight(in * out), bias(out) {}

namespace {

using Index = std::ptrdiff_t;

void check_conv_input(const Tensor4& x, const ConvParams& p) {
    if (x.c != p.in_channels) {
        std::ostringstream msg;
        msg << "conv2d: input shape " << x.shape_string() << " has " << x.c << " channels, kernel ("
            << p.out_channels << ", " << p.in_channels / p.groups << ", " << p.kernel_h << ", " << p.kernel_w
            << ") with groups " << p.groups << " expects " << p.in_channels;
        throw ShapeError(msg.str());
    }
    if (x.h + 2 * p.padding < p.kernel_h || x.w + 2 * p.padding < p.kernel_w) {
        throw ShapeError("conv2d: input " + x.shape_string() + " smaller than kernel " +
                         std::to_string(p.kernel_h) + "x" + std::to_string(p.kernel_w));
    }
}

// Output columns ox for which ix = ox * stride + kx - pad lies inside [0, in_w).
std::pair<Index, Index> valid_range(Index kx, Index pad, Index stride, Index in_w, Index out_w) {
    const Index offset = kx - pad;
    Index lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    Index hi = (in_w - 1 - offset) >= 0 ? (in_w - 1 - offset) / stride : -1;
    hi = std::min(hi, out_w - 1);
    lo = std::max<Index>(lo, 0);
    return {lo, hi};
}

// 1x1, stride 1, no padding, one group: a per-image (C_out x C_in) x (C_in x HW) product.
bool is_pointwise(const ConvParams& p) {
    return p.kernel_h == 1 && p.kernel_w == 1 && p.stride == 1 && p.padding == 0 && p.groups == 1;
}

void pointwise_forward(const Tensor4& x, const ConvParams& p, Tensor4& y) {
    const std::size_t plane = x.plane();
    for (std::size_t n = 0; n < x.n; ++n) {
        for (std::size_t co = 0; co < p.out_channels; ++co) {
            double* out = y.channel(n, co);
            std::fill(out, out + plane, p.has_bias() ? p.bias.value[co] : 0.0);
            const double* wrow = p.weight.value.data() + co * p.in_channels;
            for (std::size_t ci = 0; ci < p.in_channels; ++ci) {
                const double wv = wrow[ci];
                const double* in = x.channel(n, ci);
                for (std::size_t i = 0; i < plane; ++i) out[i] += wv * in[i];
            }
        }
    }
}

void pointwise_backward(const Tensor4& x, ConvParams& p, const Tensor4& dy, Tensor4& dx) {
    const std::size_t plane = x.plane();
    for (std::size_t n = 0; n < x.n; ++n) {
        for (std::size_t co = 0; co < p.out_channels; ++co) {
            const double* g = dy.channel(n, co);
            if (p.has_bias()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += g[i];
                p.bias.grad[co] += acc;
            }
            const double* wrow = p.weight.value.data() + co * p.in_channels;
            double* gwrow = p.weight.grad.data() + co * p.in_channels;
            for (std::size_t ci = 0; ci < p.in_channels; ++ci) {
                const double* in = x.channel(n, ci);
                double* gin = dx.channel(n, ci);
                const double wv = wrow[ci];
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    acc += g[i] * in[i];
                    gin[i] += wv * g[i];
                }
                gwrow[ci] += acc;
            }
        }
    }
}

}  // namespace

Tensor4 conv2d(const Tensor4& x, const ConvParams& p) {
    check_conv_input(x, p);
    const std::size_t oh = p.out_size(x.h, p.kernel_h);
    const std::size_t ow = p.out_size(x.w, p.kernel_w);
    Tensor4 y(x.n, p.out_channels, oh, ow);

    if (is_pointwise(p)) {
        pointwise_forward(x, p, y);
        return y;
    }

    const std::size_t cin_g = p.in_channels / p.groups;
    const std::size_t cout_g = p.out_channels / p.groups;
    const auto s = static_cast<Index>(p.stride);
    const auto pad = static_cast<Index>(p.padding);
    const auto H = static_cast<Index>(x.h);
    const auto W = static_cast<Index>(x.w);
    const auto OH = static_cast<Index>(oh);
    const auto OW = static_cast<Index>(ow);

    for (std::size_t n = 0; n < x.n; ++n) {
        for (std::size_t g = 0; g < p.groups; ++g) {
            for (std::size_t col = 0; col < cout_g; ++col) {
                const std::size_t co = g * cout_g + col;
                double* out = y.channel(n, co);
                if (p.has_bias()) std::fill(out, out + oh * ow, p.bias.value[co]);
                for (std::size_t cil = 0; cil < cin_g; ++cil) {
                    const double* in = x.channel(n, g * cin_g + cil);
                    const double* wk = p.weight.value.data() + ((co * cin_g + cil) * p.kernel_h) * p.kernel_w;
                    for (Index ky = 0; ky < static_cast<Index>(p.kernel_h); ++ky) {
                        for (Index kx = 0; kx < static_cast<Index>(p.kernel_w); ++kx) {
                            const double wv = wk[ky * static_cast<Index>(p.kernel_w) + kx];
                            const auto [lo, hi] = valid_range(kx, pad, s, W, OW);
                            for (Index oy = 0; oy < OH; ++oy) {
                                const Index iy = oy * s + ky - pad;
                                if (iy < 0 || iy >= H) continue;
                                const double* irow = in + iy * W + (kx - pad);
                                double* orow = out + oy * OW;
                                for (Index ox = lo; ox <= hi; ++ox) orow[ox] += wv * irow[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor4 conv2d_backward(const Tensor4& x, ConvParams& p, const Tensor4& dy) {
    check_conv_input(x, p);
    const std::size_t oh = p.out_size(x.h, p.kernel_h);
    const std::size_t ow = p.out_size(x.w, p.kernel_w);
    if (dy.n != x.n || dy.c != p.out_channels || dy.h != oh || dy.w != ow)
        throw ShapeError("conv2d_backward: upstream gradient " + dy.shape_string() + " does not match output (" +
                         std::to_string(x.n) + ", " + std::to_string(p.out_channels) + ", " + std::to_string(oh) +
                         ", " + std::to_string(ow) + ")");
    if (p.weight.grad.size() != p.weight.size()) p.weight.zero_grad();
    if (p.has_bias() && p.bias.grad.size() != p.bias.size()) p.bias.zero_grad();

    Tensor4 dx(x.n, x.c, x.h, x.w);
    if (is_pointwise(p)) {
        pointwise_backward(x, p, dy, dx);
        return dx;
    }
    const std::size_t cin_g = p.in_channels / p.groups;
    const std::size_t cout_g = p.out_channels / p.groups;
    const auto s = static_cast<Index>(p.stride);
    const auto pad = static_cast<Index>(p.padding);
    const auto H = static_cast<Index>(x.h);
    const auto W = static_cast<Index>(x.w);
    const auto OH = static_cast<Index>(oh);
    const auto OW = static_cast<Index>(ow);

    for (std::size_t n = 0; n < x.n; ++n) {
        for (std::size_t g = 0; g < p.groups; ++g) {
            for (std::size_t col = 0; col < cout_g; ++col) {
                const std::size_t co = g * cout_g + col;
                const double* gout = dy.channel(n, co);
                if (p.has_bias()) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < oh * ow; ++i) acc += gout[i];
                    p.bias.grad[co] += acc;
                }
                for (std::size_t cil = 0; cil < cin_g; ++cil) {
                    const std::size_t ci = g * cin_g + cil;
                    const double* in = x.channel(n, ci);
                    double* gin = dx.channel(n, ci);
                    const std::size_t wbase = ((co * cin_g + cil) * p.kernel_h) * p.kernel_w;
                    for (Index ky = 0; ky < static_cast<Index>(p.kernel_h); ++ky) {
                        for (Index kx = 0; kx < static_cast<Index>(p.kernel_w); ++kx) {
                            const std::size_t widx = wbase + static_cast<std::size_t>(ky * static_cast<Index>(p.kernel_w) + kx);
                            const double wv = p.weight.value[widx];
                            const auto [lo, hi] = valid_range(kx, pad, s, W, OW);
                            double wacc = 0.0;
                            for (Index oy = 0; oy < OH; ++oy) {
                                const Index iy = oy * s + ky - pad;
                                if (iy < 0 || iy >= H) continue;
                                const double* irow = in + iy * W + (kx - pad);
                                double* girow = gin + iy * W + (kx - pad);
                                const double* grow = gout + oy * OW;
                                for (Index ox = lo; ox <= hi; ++ox) {
                                    wacc += grow[ox] * irow[ox * s];
                                    girow[ox * s] += wv * grow[ox];
                                }
                            }
                            p.weight.grad[widx] += wacc;
                        }
                    }
                }
            }
        }
    }
    return dx;
}

namespace {

void check_depthwise(const Tensor4& x, const ConvParams& p) {
    if (p.groups != p.in_channels || p.in_channels != p.out_channels)
        throw ShapeError("depthwise_conv2d requires groups == in_channels == out_channels, got groups " +
                         std::to_string(p.groups) + ", channels " + std::to_string(p.in_channels) + " -> " +
                         std::to_string(p.out_channels));
    check_conv_input(x, p);
}

}  // namespace

Tensor4 depthwise_conv2d(const Tensor4& x, const ConvParams& p) {
    check_depthwise(x, p);
    const std::size_t oh = p.out_size(x.h, p.kernel_h);
    const std::size_t ow = p.out_size(x.w, p.kernel_w);
    Tensor4 y(x.n, x.c, oh, ow);
    const auto kh = static_cast<Index>(p.kernel_h);
    const auto kw = static_cast<Index>(p.kernel_w);
    const auto H = static_cast<Index>(x.h);
    const auto W = static_cast<Index>(x.w);
    for (std::size_t n = 0; n < x.n; ++n) {
        for (std::size_t c = 0; c < x.c; ++c) {
            const double* in = x.channel(n, c);
            const double* k = p.weight.value.data() + c * p.kernel_h * p.kernel_w;
            double* out = y.channel(n, c);
            const double b = p.has_bias() ? p.bias.value[c] : 0.0;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = b;
                    const Index y0 = static_cast<Index>(oy * p.stride) - static_cast<Index>(p.padding);
                    const Index x0 = static_cast<Index>(ox * p.stride) - static_cast<Index>(p.padding);
                    for (Index ky = 0; ky < kh; ++ky) {
                        const Index iy = y0 + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (Index kx = 0; kx < kw; ++kx) {
                            const Index ix = x0 + kx;
                            if (ix < 0 || ix >= W) continue;
                            acc += in[iy * W + ix] * k[ky * kw + kx];
                        }
                    }
                    out[oy * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

Tensor4 depthwise_conv2d_backward(const Tensor4& x, ConvParams& p, const Tensor4& dy) {
    check_depthwise(x, p);
    const std::size_t oh = p.out_size(x.h, p.kernel_h);
    const std::size_t ow = p.out_size(x.w, p.kernel_w);
    if (dy.n != x.n || dy.c != x.c || dy.h != oh || dy.w != ow)
        throw ShapeError("depthwise_conv2d_backward: upstream gradient " + dy.shape_string() + " mismatches output");
    if (p.weight.grad.size() != p.weight.size()) p.weight.zero_grad();
    if (p.has_bias() && p.bias.grad.size() != p.bias.size()) p.bias.zero_grad();

    Tensor4 dx(x.n, x.c, x.h, x.w);
    const auto kh = static_cast<Index>(p.kernel_h);
    const auto kw = static_cast<Index>(p.kernel_w);
    const auto H = static_cast<Index>(x.h);
    const auto W = static_cast<Index>(x.w);
    for (std::size_t n = 0; n < x.n; ++n) {
        for (std::size_t c = 0; c < x.c; ++c) {
            const double* in = x.channel(n, c);
            const double* g = dy.channel(n, c);
            double* gin = dx.channel(n, c);
            const double* k = p.weight.value.data() + c * p.kernel_h * p.kernel_w;
            double* gk = p.weight.grad.data() + c * p.kernel_h * p.kernel_w;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double go = g[oy * ow + ox];
                    if (p.has_bias()) p.bias.grad[c] += go;
                    const Index y0 = static_cast<Index>(oy * p.stride) - static_cast<Index>(p.padding);
                    const Index x0 = static_cast<Index>(ox * p.stride) - static_cast<Index>(p.padding);
                    for (Index ky = 0; ky < kh; ++ky) {
                        const Index iy = y0 + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (Index kx = 0; kx < kw; ++kx) {
                            const Index ix = x0 + kx;
                            if (ix < 0 || ix >= W) continue;
                            gk[ky * kw + kx] += go * in[iy * W + ix];
                            gin[iy * W + ix] += go * k[ky * kw + kx];
                        }
                    }
                }
            }
        }
    }
    return dx;
}

Tensor4 relu(const Tensor4& x) {
    Tensor4 y = x;
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& dy) {
    if (!x.same_shape(dy)) throw ShapeError("relu_backward: " + x.shape_string() + " vs " + dy.shape_string());
    Tensor4 dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
    return dx;
}

namespace {

void check_pool(const Tensor4& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0 || x.h == 0 || x.w == 0)
        throw ShapeError("maxpool2x2 needs even non-zero spatial dims, got " + x.shape_string());
}

// Flat offset (within the channel plane) of the first maximum of window (oy, ox).
std::size_t pool_argmax(const double* plane, std::size_t w, std::size_t oy, std::size_t ox) {
    const std::size_t cand[4] = {2 * oy * w + 2 * ox, 2 * oy * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                 (2 * oy + 1) * w + 2 * ox + 1};
    std::size_t best = cand[0];
    for (std::size_t i = 1; i < 4; ++i)
        if (plane[cand[i]] > plane[best]) best = cand[i];
    return best;
}

}  // namespace

Tensor4 maxpool2x2(const Tensor4& x) {
    check_pool(x);
    Tensor4 y(x.n, x.c, x.h / 2, x.w / 2);
    for (std::size_t n = 0; n < x.n; ++n)
        for (std::size_t c = 0; c < x.c; ++c) {
            const double* in = x.channel(n, c);
            double* out = y.channel(n, c);
            for (std::size_t oy = 0; oy < y.h; ++oy)
                for (std::size_t ox = 0; ox < y.w; ++ox) out[oy * y.w + ox] = in[pool_argmax(in, x.w, oy, ox)];
        }
    return y;
}

Tensor4 maxpool2x2_backward(const Tensor4& x, const Tensor4& dy) {
    check_pool(x);
    if (dy.n != x.n || dy.c != x.c || dy.h != x.h / 2 || dy.w != x.w / 2)
        throw ShapeError("maxpool2x2_backward: upstream " + dy.shape_string() + " vs input " + x.shape_string());
    Tensor4 dx(x.n, x.c, x.h, x.w);
    for (std::size_t n = 0; n < x.n; ++n)
        for (std::size_t c = 0; c < x.c; ++c) {
            const double* in = x.channel(n, c);
            const double* g = dy.channel(n, c);
            double* gin = dx.channel(n, c);
            for (std::size_t oy = 0; oy < dy.h; ++oy)
                for (std::size_t ox = 0; ox < dy.w; ++ox) gin[pool_argmax(in, x.w, oy, ox)] += g[oy * dy.w + ox];
        }
    return dx;
}

Tensor4 batchnorm(const Tensor4& x, BatchNormParams& p, Mode mode, BatchNormCache* cache) {
    if (x.c != p.channels)
        throw ShapeError("batchnorm: input " + x.shape_string() + " but parameters for " +
                         std::to_string(p.channels) + " channels");
    if (mode == Mode::Train && x.n < 2) throw DomainError("batchnorm in Train mode needs a batch of at least 2");

    const std::size_t plane = x.plane();
    const auto count = static_cast<double>(x.n * plane);
    Tensor4 y(x.n, x.c, x.h, x.w);
    Tensor4 xhat(x.n, x.c, x.h, x.w);
    std::vector<double> inv_std(x.c);

    for (std::size_t c = 0; c < x.c; ++c) {
        double mean = 0.0, var = 0.0;
        if (mode == Mode::Train) {
            for (std::size_t n = 0; n < x.n; ++n) {
                const double* in = x.channel(n, c);
                for (std::size_t i = 0; i < plane; ++i) mean += in[i];
            }
            mean /= count;
            for (std::size_t n = 0; n < x.n; ++n) {
                const double* in = x.channel(n, c);
                for (std::size_t i = 0; i < plane; ++i) var += (in[i] - mean) * (in[i] - mean);
            }
            var /= count;
            const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
            p.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean;
            p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased;
        } else {
            mean = p.running_mean[c];
            var = p.running_var[c];
        }
        inv_std[c] = 1.0 / std::sqrt(var + p.epsilon);
        const double g = p.gamma.value[c];
        const double b = p.beta.value[c];
        for (std::size_t n = 0; n < x.n; ++n) {
            const double* in = x.channel(n, c);
            double* xh = xhat.channel(n, c);
            double* out = y.channel(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = (in[i] - mean) * inv_std[c];
                out[i] = g * xh[i] + b;
            }
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->batch_stats = mode == Mode::Train;
    }
    return y;
}

Tensor4 batchnorm_backward(const BatchNormCache& cache, BatchNormParams& p, const Tensor4& dy) {
    const Tensor4& xhat = cache.xhat;
    if (!xhat.same_shape(dy))
        throw ShapeError("batchnorm_backward: upstream " + dy.shape_string() + " vs cached " + xhat.shape_string());
    if (p.gamma.grad.size() != p.channels) p.gamma.zero_grad();
    if (p.beta.grad.size() != p.channels) p.beta.zero_grad();

    const std::size_t plane = dy.plane();
    const auto count = static_cast<double>(dy.n * plane);
    Tensor4 dx(dy.n, dy.c, dy.h, dy.w);
    for (std::size_t c = 0; c < dy.c; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < dy.n; ++n) {
            const double* g = dy.channel(n, c);
            const double* xh = xhat.channel(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += g[i];
                sum_dy_xhat += g[i] * xh[i];
            }
        }
        p.gamma.grad[c] += sum_dy_xhat;
        p.beta.grad[c] += sum_dy;
        const double scale = p.gamma.value[c] * cache.inv_std[c];
        for (std::size_t n = 0; n < dy.n; ++n) {
            const double* g = dy.channel(n, c);
            const double* xh = xhat.channel(n, c);
            double* out = dx.channel(n, c);
            if (cache.batch_stats) {
                for (std::size_t i = 0; i < plane; ++i)
                    out[i] = scale * (g[i] - sum_dy / count - xh[i] * sum_dy_xhat / count);
            } else {
                for (std::size_t i = 0; i < plane; ++i) out[i] = scale * g[i];
            }
        }
    }
    return dx;
}

Tensor4 channel_shuffle(const Tensor4& x, std::size_t groups) {
    if (groups == 0 || x.c % groups != 0)
        throw ShapeError("channel_shuffle: " + std::to_string(x.c) + " channels not divisible by " +
                         std::to_string(groups) + " groups");
    const std::size_t per = x.c / groups;
    Tensor4 y(x.n, x.c, x.h, x.w);
    const std::size_t plane = x.plane();
    for (std::size_t n = 0; n < x.n; ++n)
        for (std::size_t c = 0; c < x.c; ++c) {
            const std::size_t dst = (c % groups) * per + c / groups;
            std::copy_n(x.channel(n, c), plane, y.channel(n, dst));
        }
    return y;
}

Tensor4 channel_shuffle_backward(const Tensor4& dy, std::size_t groups) {
    if (groups == 0 || dy.c % groups != 0)
        throw ShapeError("channel_shuffle_backward: bad group count " + std::to_string(groups));
    return channel_shuffle(dy, dy.c / groups);
}

std::pair<Tensor4, Tensor4> split_channels(const Tensor4& x, std::size_t at) {
    if (at > x.c) throw ShapeError("split_channels: split point beyond " + x.shape_string());
    Tensor4 a(x.n, at, x.h, x.w);
    Tensor4 b(x.n, x.c - at, x.h, x.w);
    const std::size_t plane = x.plane();
    for (std::size_t n = 0; n < x.n; ++n) {
        std::copy_n(x.channel(n, 0), at * plane, a.channel(n, 0));
        if (x.c > at) std::copy_n(x.channel(n, at), (x.c - at) * plane, b.channel(n, 0));
    }
    return {std::move(a), std::move(b)};
}

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw ShapeError("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
    Tensor4 y(a.n, a.c + b.c, a.h, a.w);
    const std::size_t plane = a.plane();
    for (std::size_t n = 0; n < a.n; ++n) {
        std::copy_n(a.channel(n, 0), a.c * plane, y.channel(n, 0));
        std::copy_n(b.channel(n, 0), b.c * plane, y.channel(n, a.c));
    }
    return y;
}

Matrix global_avg_pool(const Tensor4& x) {
    Matrix y(x.n, x.c);
    const std::size_t plane = x.plane();
    for (std::size_t n = 0; n < x.n; ++n)
        for (std::size_t c = 0; c < x.c; ++c) {
            const double* in = x.channel(n, c);
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += in[i];
            y(n, c) = acc / static_cast<double>(plane);
        }
    return y;
}

Tensor4 global_avg_pool_backward(const Matrix& dy, std::size_t h, std::size_t w) {
    Tensor4 dx(dy.rows, dy.cols, h, w);
    const double inv = 1.0 / static_cast<double>(h * w);
    for (std::size_t n = 0; n < dy.rows; ++n)
        for (std::size_t c = 0; c < dy.cols; ++c) {
            double* out = dx.channel(n, c);
            std::fill(out, out + h * w, dy(n, c) * inv);
        }
    return dx;
}

Matrix dense(const Matrix& x, const DenseParams& p) {
    if (x.cols != p.in_features)
        throw ShapeError("dense: input has " + std::to_string(x.cols) + " features, layer expects " +
                         std::to_string(p.in_features));
    Matrix y(x.rows, p.out_features);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t o = 0; o < p.out_features; ++o) {
            double acc = p.bias.value[o];
            const double* wrow = p.weight.value.data() + o * p.in_features;
            for (std::size_t i = 0; i < p.in_features; ++i) acc += wrow[i] * x(r, i);
            y(r, o) = acc;
        }
    return y;
}

Matrix dense_backward(const Matrix& x, DenseParams& p, const Matrix& dy) {
    if (dy.rows != x.rows || dy.cols != p.out_features || x.cols != p.in_features)
        throw ShapeError("dense_backward: shape mismatch");
    if (p.weight.grad.size() != p.weight.size()) p.weight.zero_grad();
    if (p.bias.grad.size() != p.bias.size()) p.bias.zero_grad();
    Matrix dx(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t o = 0; o < p.out_features; ++o) {
            const double g = dy(r, o);
            p.bias.grad[o] += g;
            double* gw = p.weight.grad.data() + o * p.in_features;
            const double* wrow = p.weight.value.data() + o * p.in_features;
            for (std::size_t i = 0; i < p.in_features; ++i) {
                gw[i] += g * x(r, i);
                dx(r, i) += g * wrow[i];
            }
        }
    return dx;
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        double mx = logits(r, 0);
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, logits(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) {
            p(r, c) = std::exp(logits(r, c) - mx);
            z += p(r, c);
        }
        for (std::size_t c = 0; c < logits.cols; ++c) p(r, c) /= z;
    }
    return p;
}

LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows) + " rows");
    if (logits.rows == 0) throw ShapeError("softmax_cross_entropy: empty batch");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
            throw DomainError("label " + std::to_string(y) + " outside 0.." + std::to_string(logits.cols - 1));

    LossResult out;
    out.dlogits = Matrix(logits.rows, logits.cols);
    const auto n = static_cast<double>(logits.rows);
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        double mx = logits(r, 0);
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, logits(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) z += std::exp(logits(r, c) - mx);
        const double log_z = std::log(z);
        const auto y = static_cast<std::size_t>(labels[r]);
        // -log softmax_y = log_z - (l_y - mx); computed this way it does not underflow to 0.
        total += log_z - (logits(r, y) - mx);
        for (std::size_t c = 0; c < logits.cols; ++c) {
            const double prob = std::exp(logits(r, c) - mx - log_z);
            out.dlogits(r, c) = (prob - (c == y ? 1.0 : 0.0)) / n;
        }
    }
    out.loss = total / n;
    return out;
}

std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace mdiag::nn
