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

#ifndef ZSPLAT_POINT_REPRESENTATION_HPP
#define ZSPLAT_POINT_REPRESENTATION_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zsplat/errors.hpp"
#include "zsplat/numerics.hpp"

namespace zsplat {

using Vec3f = std::array<float, 3>;
using Vec3d = std::array<double, 3>;

inline constexpr std::size_t kDefaultFeatureWidth = 96;
inline constexpr std::size_t kShCoefficients = 27;  // 9 degree-2 basis functions x 3 channels

/// Parallel per-point sequences: world positions, features (M x C), colors in
/// [0, 1], and the source view of each point.
struct PointRepresentation {
    std::vector<Vec3f> positions;
    Tensor2<float> features;
    std::vector<Vec3f> colors;
    std::vector<std::uint32_t> view_of;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
    std::size_t feature_width() const { return features.cols; }

    void validate() const {
        const std::size_t m = positions.size();
        if (features.rows != m || colors.size() != m || view_of.size() != m)
            throw InputError("point representation sequences disagree in length: positions " + std::to_string(m) +
                             ", features " + std::to_string(features.rows) + ", colors " +
                             std::to_string(colors.size()) + ", view_of " + std::to_string(view_of.size()));
        for (std::size_t i = 0; i < m; ++i)
            for (float c : colors[i])
                if (!(c >= 0.0f && c <= 1.0f))
                    throw InputError("color of point " + std::to_string(i) + " is outside [0, 1]");
    }

    /// out[i] = this[order[i]] for every parallel sequence.
    PointRepresentation permuted(std::span<const std::size_t> order) const {
        PointRepresentation out;
        const std::size_t w = features.cols;
        out.positions.reserve(order.size());
        out.colors.reserve(order.size());
        out.view_of.reserve(order.size());
        out.features = Tensor2<float>(order.size(), w);
        for (std::size_t i = 0; i < order.size(); ++i) {
            const std::size_t src = order[i];
            out.positions.push_back(positions[src]);
            out.colors.push_back(colors[src]);
            out.view_of.push_back(view_of[src]);
            std::copy_n(&features.data[src * w], w, &out.features.data[i * w]);
        }
        return out;
    }

    bool operator==(const PointRepresentation&) const = default;
};

/// One 3D Gaussian. SH coefficients are stored coefficient-major:
/// sh[k * 3 + channel] for basis function k in [0, 9), k = 0 being the DC term.
struct GaussianPrimitive {
    Vec3f center{};
    float opacity = 0.5f;
    std::array<float, 4> rotation{1.0f, 0.0f, 0.0f, 0.0f};  // (w, x, y, z)
    Vec3f scale{1.0f, 1.0f, 1.0f};
    std::array<float, kShCoefficients> sh{};

    /// Reason the primitive is invalid, or nullopt.
    std::optional<std::string> violation() const {
        for (float v : center)
            if (!std::isfinite(v)) return "non-finite center";
        if (!(opacity > 0.0f && opacity < 1.0f)) return "opacity outside (0, 1)";
        double norm2 = 0.0;
        for (float q : rotation) norm2 += static_cast<double>(q) * q;
        if (!(std::abs(std::sqrt(norm2) - 1.0) <= 1e-6)) return "rotation is not a unit quaternion";
        for (float s : scale)
            if (!(s > 0.0f) || !std::isfinite(s)) return "scale is not positive";
        for (float c : sh)
            if (!std::isfinite(c)) return "non-finite SH coefficient";
        return std::nullopt;
    }

    bool operator==(const GaussianPrimitive&) const = default;
};

}  // namespace zsplat

#endif  // ZSPLAT_POINT_REPRESENTATION_HPP
