#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mdiag::nn {

/// Dense NCHW tensor of doubles, row-major N -> C -> H -> W.
struct Tensor4 {
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return h * w; }
    std::size_t index(std::size_t in, std::size_t ic, std::size_t iy, std::size_t ix) const {
        return ((in * c + ic) * h + iy) * w + ix;
    }
    double& at(std::size_t in, std::size_t ic, std::size_t iy, std::size_t ix) { return data[index(in, ic, iy, ix)]; }
    double at(std::size_t in, std::size_t ic, std::size_t iy, std::size_t ix) const {
        return data[index(in, ic, iy, ix)];
    }
    double* channel(std::size_t in, std::size_t ic) { return data.data() + (in * c + ic) * plane(); }
    const double* channel(std::size_t in, std::size_t ic) const { return data.data() + (in * c + ic) * plane(); }

    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    std::string shape_string() const;

    bool operator==(const Tensor4&) const = default;
};

/// Row-major rows x cols matrix (logits, probabilities, dense activations).
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

/// A trainable array and its accumulated gradient.
struct Param {
    std::vector<double> value;
    std::vector<double> grad;

    Param() = default;
    explicit Param(std::size_t n, double fill = 0.0) : value(n, fill), grad(n, 0.0) {}
    std::size_t size() const { return value.size(); }
    bool empty() const { return value.empty(); }
    void zero_grad() { grad.assign(value.size(), 0.0); }
};

}  // namespace mdiag::nn
