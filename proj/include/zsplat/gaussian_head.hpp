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

#ifndef ZSPLAT_GAUSSIAN_HEAD_HPP
#define ZSPLAT_GAUSSIAN_HEAD_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "zsplat/errors.hpp"
#include "zsplat/numerics.hpp"
#include "zsplat/parallel.hpp"
#include "zsplat/point_representation.hpp"

namespace zsplat {

/// Degree-0 real spherical harmonic constant; rendered DC color = 0.5 + kShC0 * f_dc.
inline constexpr double kShC0 = 0.28209479177387814;

inline constexpr std::size_t kHeadRawWidth = 3 + 1 + 4 + 3 + kShCoefficients;  // 38
inline constexpr std::size_t kDefaultHeadHidden = 128;

// Raw output layout.
inline constexpr std::size_t kRawOffset = 0, kRawOpacity = 3, kRawRotation = 4, kRawScale = 8, kRawSh = 11;

// The raw scale is clamped to [kMinLogScale, kMaxLogScale] before exp, the raw
// opacity to +-kMaxOpacityLogit so sigmoid stays strictly inside (0, 1) in float.
inline constexpr double kMinLogScale = -10.0, kMaxLogScale = 3.0, kMaxOpacityLogit = 15.0;

template <class T>
struct HeadParams {
    LinearLayer<T> layer1;  // (model_width + 3) -> hidden
    LinearLayer<T> layer2;  // hidden -> 38

    std::size_t model_width() const { return layer1.in_features() - 3; }

    template <class U>
    HeadParams<U> cast() const {
        return {layer1.template cast<U>(), layer2.template cast<U>()};
    }

    void validate(std::size_t feature_width) const {
        if (layer1.in_features() != feature_width + 3)
            throw ConfigError("head layer1 expects " + std::to_string(layer1.in_features()) +
                              " inputs, features + colors give " + std::to_string(feature_width + 3));
        if (layer2.in_features() != layer1.out_features() || layer2.out_features() != kHeadRawWidth)
            throw ConfigError("head layer2 has shape " + layer2.weight.shape_string() + ", expected " +
                              std::to_string(kHeadRawWidth) + "x" + std::to_string(layer1.out_features()));
    }

    bool operator==(const HeadParams&) const = default;
};

template <class T = float>
HeadParams<T> init_head(std::size_t model_width, std::size_t hidden, std::uint64_t seed) {
    SplitMix64 seeds(seed);
    HeadParams<T> p;
    p.layer1 = init_linear<T>(model_width + 3, hidden, seeds.next());
    p.layer2 = init_linear<T>(hidden, kHeadRawWidth, seeds.next());
    return p;
}

/// SH coefficients whose DC term reproduces `color` under 0.5 + C0 * f_dc.
inline std::array<double, kShCoefficients> sh_from_color(const Vec3f& color) {
    std::array<double, kShCoefficients> sh{};
    for (int ch = 0; ch < 3; ++ch) sh[static_cast<std::size_t>(ch)] = (static_cast<double>(color[ch]) - 0.5) / kShC0;
    return sh;
}

/// Inverse of the DC convention for one channel.
inline double color_from_sh(float dc) { return 0.5 + kShC0 * static_cast<double>(dc); }

/// 8-bit pixel value carried by a DC coefficient.
inline int pixel_from_sh(float dc) { return static_cast<int>(std::lround(255.0 * color_from_sh(dc))); }

/// Intermediate values of one head evaluation, retained for backward.
template <class T>
struct HeadCache {
    Tensor2<T> input;   // n x (w + 3)
    Tensor2<T> hidden;  // pre-activation
    Tensor2<T> active;  // GELU(hidden)
    Tensor2<T> raw;     // n x 38
};

/// Per point, the 38 final parameter values in raw-layout order:
/// center(3), opacity(1), rotation(4), scale(3), sh(27).
template <class T>
Tensor2<T> head_outputs(const std::vector<Vec3f>& positions, const Tensor2<T>& features,
                        const std::vector<Vec3f>& colors, const HeadParams<T>& p, double offset_scale,
                        HeadCache<T>* cache = nullptr) {
    const std::size_t n = features.rows, w = features.cols;
    p.validate(w);
    if (positions.size() != n || colors.size() != n)
        throw DimensionError("head inputs disagree in length");
    Tensor2<T> input(n, w + 3);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = input.row(i);
        std::copy_n(&features.data[i * w], w, row.begin());
        for (int c = 0; c < 3; ++c) row[w + static_cast<std::size_t>(c)] = static_cast<T>(colors[i][c]);
    }
    Tensor2<T> hidden(n, p.layer1.out_features()), active(n, p.layer1.out_features()), raw(n, kHeadRawWidth);
    Tensor2<T> out(n, kHeadRawWidth);
    parallel_for(
        n,
        [&](std::size_t r0, std::size_t r1) {
            for (std::size_t i = r0; i < r1; ++i) {
                linear_forward_row(p.layer1, input.row(i), hidden.row(i));
                for (std::size_t h = 0; h < hidden.cols; ++h)
                    active(i, h) = static_cast<T>(gelu(static_cast<double>(hidden(i, h))));
                linear_forward_row(p.layer2, active.row(i), raw.row(i));
                auto r = raw.row(i);
                auto o = out.row(i);
                for (int a = 0; a < 3; ++a)
                    o[kRawOffset + a] = static_cast<T>(static_cast<double>(positions[i][a]) +
                                                       offset_scale * std::tanh(static_cast<double>(r[kRawOffset + a])));
                o[kRawOpacity] = static_cast<T>(
                    sigmoid(std::clamp(static_cast<double>(r[kRawOpacity]), -kMaxOpacityLogit, kMaxOpacityLogit)));
                double quat[4], norm2 = 0.0;
                for (int a = 0; a < 4; ++a) {
                    quat[a] = static_cast<double>(r[kRawRotation + a]) + (a == 0 ? 1.0 : 0.0);
                    norm2 += quat[a] * quat[a];
                }
                const double norm = std::sqrt(norm2);
                for (int a = 0; a < 4; ++a)
                    o[kRawRotation + a] = static_cast<T>(norm > 1e-12 ? quat[a] / norm : (a == 0 ? 1.0 : 0.0));
                for (int a = 0; a < 3; ++a)
                    o[kRawScale + a] = static_cast<T>(
                        std::exp(std::clamp(static_cast<double>(r[kRawScale + a]), kMinLogScale, kMaxLogScale)));
                const auto sh = sh_from_color(colors[i]);
                for (std::size_t k = 0; k < kShCoefficients; ++k)
                    o[kRawSh + k] = static_cast<T>(sh[k] + static_cast<double>(r[kRawSh + k]));
            }
        },
        64);
    if (cache) *cache = {std::move(input), std::move(hidden), std::move(active), std::move(raw)};
    return out;
}

template <class T>
struct HeadGrads {
    LinearGrad<T> layer1, layer2;
    Tensor2<T> features, colors;
};

/// Gradients of the head outputs given d_out (n x 38) and the forward cache.
template <class T>
HeadGrads<T> head_backward(const HeadCache<T>& cache, const HeadParams<T>& p, double offset_scale,
                           const Tensor2<T>& d_out) {
    const std::size_t n = cache.raw.rows, w = cache.input.cols - 3;
    HeadGrads<T> g{LinearGrad<T>(p.layer1), LinearGrad<T>(p.layer2), Tensor2<T>(n, w), Tensor2<T>(n, 3)};
    Tensor2<T> d_raw(n, kHeadRawWidth);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = cache.raw.row(i);
        auto up = d_out.row(i);
        auto dr = d_raw.row(i);
        for (int a = 0; a < 3; ++a) {
            const double th = std::tanh(static_cast<double>(r[kRawOffset + a]));
            dr[kRawOffset + a] = static_cast<T>(static_cast<double>(up[kRawOffset + a]) * offset_scale * (1.0 - th * th));
        }
        const double logit_in = static_cast<double>(r[kRawOpacity]);
        if (std::abs(logit_in) < kMaxOpacityLogit) {
            const double s = sigmoid(logit_in);
            dr[kRawOpacity] = static_cast<T>(static_cast<double>(up[kRawOpacity]) * s * (1.0 - s));
        }
        double quat[4], norm2 = 0.0;
        for (int a = 0; a < 4; ++a) {
            quat[a] = static_cast<double>(r[kRawRotation + a]) + (a == 0 ? 1.0 : 0.0);
            norm2 += quat[a] * quat[a];
        }
        const double norm = std::sqrt(norm2);
        if (norm > 1e-12) {
            double dot = 0.0;
            for (int a = 0; a < 4; ++a) dot += quat[a] / norm * static_cast<double>(up[kRawRotation + a]);
            for (int a = 0; a < 4; ++a)
                dr[kRawRotation + a] =
                    static_cast<T>((static_cast<double>(up[kRawRotation + a]) - quat[a] / norm * dot) / norm);
        }
        for (int a = 0; a < 3; ++a) {
            const double v = static_cast<double>(r[kRawScale + a]);
            if (v > kMinLogScale && v < kMaxLogScale)
                dr[kRawScale + a] = static_cast<T>(static_cast<double>(up[kRawScale + a]) * std::exp(v));
        }
        for (std::size_t k = 0; k < kShCoefficients; ++k) dr[kRawSh + k] = up[kRawSh + k];
        // The DC term also depends on the color directly.
        for (int ch = 0; ch < 3; ++ch)
            g.colors(i, static_cast<std::size_t>(ch)) += static_cast<T>(static_cast<double>(up[kRawSh + ch]) / kShC0);
    }
    Tensor2<T> d_active = linear_backward(p.layer2, cache.active, d_raw, g.layer2);
    Tensor2<T> d_hidden(n, d_active.cols);
    for (std::size_t k = 0; k < d_hidden.data.size(); ++k)
        d_hidden.data[k] = static_cast<T>(static_cast<double>(d_active.data[k]) *
                                          gelu_grad(static_cast<double>(cache.hidden.data[k])));
    Tensor2<T> d_input = linear_backward(p.layer1, cache.input, d_hidden, g.layer1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < w; ++c) g.features(i, c) = d_input(i, c);
        for (std::size_t c = 0; c < 3; ++c) g.colors(i, c) += d_input(i, w + c);
    }
    return g;
}

/// Maps every point of `rep` to a valid Gaussian primitive. The center offset
/// is bounded by offset_scale in each axis.
inline std::vector<GaussianPrimitive> predict(const PointRepresentation& rep, const HeadParams<float>& p,
                                              double offset_scale) {
    if (rep.empty()) return {};
    rep.validate();
    const auto out = head_outputs(rep.positions, rep.features, rep.colors, p, offset_scale);
    std::vector<GaussianPrimitive> gaussians(rep.size());
    for (std::size_t i = 0; i < rep.size(); ++i) {
        auto o = out.row(i);
        auto& g = gaussians[i];
        std::copy_n(&o[kRawOffset], 3, g.center.begin());
        g.opacity = o[kRawOpacity];
        std::copy_n(&o[kRawRotation], 4, g.rotation.begin());
        std::copy_n(&o[kRawScale], 3, g.scale.begin());
        std::copy_n(&o[kRawSh], kShCoefficients, g.sh.begin());
    }
    return gaussians;
}

/// The same head applied to both levels.
inline std::pair<std::vector<GaussianPrimitive>, std::vector<GaussianPrimitive>> predict_multilevel(
    const PointRepresentation& level1, const PointRepresentation& level2, const HeadParams<float>& p,
    double offset_scale_l1, double offset_scale_l2) {
    return {predict(level1, p, offset_scale_l1), predict(level2, p, offset_scale_l2)};
}

}  // namespace zsplat

#endif  // ZSPLAT_GAUSSIAN_HEAD_HPP
