/* Copyright 2026 The zsplat Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ZSPLAT_NUMERICS_HPP
#define ZSPLAT_NUMERICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "zsplat/errors.hpp"

namespace zsplat {

/// Dense row-major matrix. Production paths use Tensor2<float>; gradient
/// checks instantiate the same code with double.
template <class T>
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}
    Tensor2(std::size_t r, std::size_t c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != r * c)
            throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                                 std::to_string(r) + "x" + std::to_string(c));
    }
    Tensor2(std::initializer_list<std::initializer_list<T>> nested) {
        rows = nested.size();
        cols = rows ? nested.begin()->size() : 0;
        data.reserve(rows * cols);
        for (const auto& row : nested) {
            if (row.size() != cols) throw DimensionError("ragged initializer for Tensor2");
            data.insert(data.end(), row.begin(), row.end());
        }
    }

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::string shape_string() const { return std::to_string(rows) + "x" + std::to_string(cols); }

    template <class U>
    Tensor2<U> cast() const {
        Tensor2<U> out(rows, cols);
        std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    bool operator==(const Tensor2&) const = default;
};

template <class T>
bool all_finite(std::span<const T> values) {
    return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template <class T>
void require_finite(const Tensor2<T>& t, const std::string& what) {
    if (!all_finite<T>(t.data)) throw NumericError(what + " contains non-finite values");
}

template <class T>
Tensor2<T> matmul(const Tensor2<T>& a, const Tensor2<T>& b) {
    if (a.cols != b.rows)
        throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " + b.shape_string());
    Tensor2<T> out(a.rows, b.cols);
    std::vector<double> acc(b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            const T* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) acc[j] += aik * static_cast<double>(brow[j]);
        }
        for (std::size_t j = 0; j < b.cols; ++j) out(i, j) = static_cast<T>(acc[j]);
    }
    return out;
}

template <class T>
Tensor2<T> transpose(const Tensor2<T>& a) {
    Tensor2<T> out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

/// In-place stable softmax of one row (max subtraction, 64-bit sums).
template <class T>
void softmax_inplace(std::span<T> row) {
    if (row.empty()) return;
    const double peak = static_cast<double>(*std::max_element(row.begin(), row.end()));
    double total = 0.0;
    for (auto& v : row) {
        const double e = std::exp(static_cast<double>(v) - peak);
        v = static_cast<T>(e);
        total += e;
    }
    for (auto& v : row) v = static_cast<T>(static_cast<double>(v) / total);
}

template <class T>
Tensor2<T> softmax_rows(Tensor2<T> x) {
    for (std::size_t r = 0; r < x.rows; ++r) softmax_inplace(x.row(r));
    return x;
}

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Exact (erf) GELU and its derivative.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double gelu_grad(double x) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// SplitMix64 (Steele, Lea, Flood 2014). The only generator used for
/// parameter initialization, so seeds reproduce bit-for-bit on every platform.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

/// y = x W^T + b with W stored out x in.
template <class T>
struct LinearLayer {
    Tensor2<T> weight;
    std::vector<T> bias;
    std::uint64_t seed = 0;

    std::size_t in_features() const { return weight.cols; }
    std::size_t out_features() const { return weight.rows; }

    template <class U>
    LinearLayer<U> cast() const {
        return {weight.template cast<U>(), std::vector<U>(bias.begin(), bias.end()), seed};
    }

    /// Compares values only; `seed` records provenance.
    bool operator==(const LinearLayer& o) const { return weight == o.weight && bias == o.bias; }
};

/// Weights uniform in +-sqrt(6 / (in + out)) drawn in row-major order from
/// SplitMix64(seed); bias zero. Values are generated in double and rounded
/// once, so float and double layers with the same seed agree.
template <class T = float>
LinearLayer<T> init_linear(std::size_t in, std::size_t out, std::uint64_t seed) {
    if (in < 1 || out < 1) throw InputError("init_linear requires in, out >= 1");
    LinearLayer<T> layer{Tensor2<T>(out, in), std::vector<T>(out, T(0)), seed};
    SplitMix64 rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& w : layer.weight.data) w = static_cast<T>(rng.uniform(-bound, bound));
    return layer;
}

template <class T>
void linear_forward_row(const LinearLayer<T>& layer, std::type_identity_t<std::span<const T>> x, std::span<T> y) {
    const std::size_t in = layer.in_features();
    for (std::size_t o = 0; o < layer.out_features(); ++o) {
        const T* w = &layer.weight.data[o * in];
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(w[i]);
        y[o] = static_cast<T>(acc + static_cast<double>(layer.bias[o]));
    }
}

template <class T>
Tensor2<T> linear_forward(const LinearLayer<T>& layer, const Tensor2<T>& x) {
    if (x.cols != layer.in_features())
        throw DimensionError("linear layer expects width " + std::to_string(layer.in_features()) + ", got " +
                             x.shape_string());
    Tensor2<T> y(x.rows, layer.out_features());
    for (std::size_t r = 0; r < x.rows; ++r) linear_forward_row(layer, x.row(r), y.row(r));
    return y;
}

template <class T>
struct LinearGrad {
    Tensor2<T> weight;
    std::vector<T> bias;

    explicit LinearGrad(const LinearLayer<T>& layer)
        : weight(layer.out_features(), layer.in_features()), bias(layer.out_features(), T(0)) {}
    LinearGrad() = default;
};

/// Accumulates dL/dW, dL/db into `grad` and returns dL/dx for y = x W^T + b.
template <class T>
Tensor2<T> linear_backward(const LinearLayer<T>& layer, const Tensor2<T>& x, const Tensor2<T>& dy,
                           LinearGrad<T>& grad) {
    const std::size_t in = layer.in_features(), out = layer.out_features();
    if (dy.cols != out || x.cols != in || x.rows != dy.rows)
        throw DimensionError("linear_backward shape mismatch: x " + x.shape_string() + ", dy " + dy.shape_string());
    Tensor2<T> dx(x.rows, in);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t o = 0; o < out; ++o) {
            const T g = dy(r, o);
            grad.bias[o] += g;
            for (std::size_t i = 0; i < in; ++i) {
                grad.weight(o, i) += g * x(r, i);
                dx(r, i) += g * layer.weight(o, i);
            }
        }
    }
    return dx;
}

/// Max over coordinates of |analytic - central difference| / max(1, |central
/// difference|), with central difference (f(x + h e_i) - f(x - h e_i)) / 2h.
inline double grad_check(const std::function<double(std::span<const double>)>& f,
                         const std::function<std::vector<double>(std::span<const double>)>& analytic_grad,
                         std::span<const double> point, double step) {
    if (!(step > 0)) throw InputError("grad_check step must be positive");
    const std::vector<double> analytic = analytic_grad(point);
    if (analytic.size() != point.size())
        throw DimensionError("analytic gradient has " + std::to_string(analytic.size()) + " entries, expected " +
                             std::to_string(point.size()));
    std::vector<double> probe(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + step;
        const double up = f(probe);
        probe[i] = saved - step;
        const double down = f(probe);
        probe[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("grad_check: non-finite function value at coordinate " + std::to_string(i));
        const double numeric = (up - down) / (2.0 * step);
        if (!std::isfinite(analytic[i]))
            throw NumericError("grad_check: non-finite analytic gradient at coordinate " + std::to_string(i));
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

}  // namespace zsplat

#endif  // ZSPLAT_NUMERICS_HPP
