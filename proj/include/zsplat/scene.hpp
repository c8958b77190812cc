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

#ifndef ZSPLAT_SCENE_HPP
#define ZSPLAT_SCENE_HPP

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
#include "zsplat/point_representation.hpp"

namespace zsplat {

/// Pinhole camera with a rigid camera-to-world transform (row-major 4x4).
struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    std::array<double, 16> cam_to_world{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    double pose(int r, int c) const { return cam_to_world[static_cast<std::size_t>(r * 4 + c)]; }

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("camera focal lengths must be positive");
        for (double v : cam_to_world)
            if (!std::isfinite(v)) throw InputError("camera pose contains non-finite values");
        if (pose(3, 0) != 0.0 || pose(3, 1) != 0.0 || pose(3, 2) != 0.0 || pose(3, 3) != 1.0)
            throw InputError("camera pose last row must be [0, 0, 0, 1]");
        double worst = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double dot = 0.0;
                for (int k = 0; k < 3; ++k) dot += pose(k, i) * pose(k, j);
                worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
            }
        if (worst >= 1e-5) throw InputError("camera rotation is not orthonormal");
    }

    static Camera translated(double fx, double fy, double cx, double cy, const Vec3d& t) {
        Camera cam{fx, fy, cx, cy};
        cam.cam_to_world[3] = t[0];
        cam.cam_to_world[7] = t[1];
        cam.cam_to_world[11] = t[2];
        return cam;
    }

    bool operator==(const Camera&) const = default;
};

/// Per-pixel depth along the camera z axis, row-major (v * width + u).
struct DepthMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> values;

    float at(std::size_t u, std::size_t v) const { return values[v * width + u]; }

    void validate() const {
        if (values.size() != width * height)
            throw InputError("depth map holds " + std::to_string(values.size()) + " values, expected " +
                             std::to_string(width) + "x" + std::to_string(height));
        for (std::size_t i = 0; i < values.size(); ++i)
            if (!(values[i] > 0.0f) || !std::isfinite(values[i]))
                throw InputError("depth at pixel " + std::to_string(i) + " is not a positive finite value");
    }
};

inline Vec3d camera_to_world(const Camera& cam, const Vec3d& pc) {
    Vec3d out{};
    for (int r = 0; r < 3; ++r)
        out[r] = cam.pose(r, 0) * pc[0] + cam.pose(r, 1) * pc[1] + cam.pose(r, 2) * pc[2] + cam.pose(r, 3);
    return out;
}

/// Pixel (u, v) at depth z maps to camera point (z (u - cx) / fx, z (v - cy) / fy, z).
inline std::vector<Vec3f> unproject(const DepthMap& depth, const Camera& cam) {
    cam.validate();
    depth.validate();
    std::vector<Vec3f> points;
    points.reserve(depth.values.size());
    for (std::size_t v = 0; v < depth.height; ++v)
        for (std::size_t u = 0; u < depth.width; ++u) {
            const double z = depth.at(u, v);
            const Vec3d pc{z * (static_cast<double>(u) - cam.cx) / cam.fx,
                           z * (static_cast<double>(v) - cam.cy) / cam.fy, z};
            const Vec3d pw = camera_to_world(cam, pc);
            points.push_back({static_cast<float>(pw[0]), static_cast<float>(pw[1]), static_cast<float>(pw[2])});
        }
    return points;
}

/// Inverse of unproject: world point to (u, v, z).
inline Vec3d project(const Camera& cam, const Vec3d& pw) {
    Vec3d d{pw[0] - cam.pose(0, 3), pw[1] - cam.pose(1, 3), pw[2] - cam.pose(2, 3)};
    Vec3d pc{};
    for (int c = 0; c < 3; ++c) pc[c] = cam.pose(0, c) * d[0] + cam.pose(1, c) * d[1] + cam.pose(2, c) * d[2];
    return {cam.fx * pc[0] / pc[2] + cam.cx, cam.fy * pc[1] / pc[2] + cam.cy, pc[2]};
}

/// Inputs of one view. `colors` is (H*W) x 3 in [0, 1]; `features`, when
/// present, is (H*W) x C.
struct ViewInput {
    DepthMap depth;
    Camera camera;
    Tensor2<float> colors;
    std::optional<Tensor2<float>> features;
};

/// Concatenates the unprojected points, features, and colors of all views in
/// view order. Views without features get their color repeated to `feature_width`
/// columns (column j holds channel j mod 3).
inline PointRepresentation assemble(std::span<const ViewInput> views,
                                    std::size_t feature_width = kDefaultFeatureWidth) {
    PointRepresentation rep;
    if (views.empty()) return rep;
    const std::size_t h = views[0].depth.height, w = views[0].depth.width;
    std::size_t width = views[0].features ? views[0].features->cols : feature_width;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto& view = views[i];
        const std::string tag = "view " + std::to_string(i);
        if (view.depth.height != h || view.depth.width != w)
            throw InputError(tag + " resolution differs from view 0");
        if (view.colors.rows != h * w || view.colors.cols != 3)
            throw InputError(tag + " colors must be " + std::to_string(h * w) + "x3, got " +
                             view.colors.shape_string());
        if (view.features && (view.features->rows != h * w || view.features->cols != width))
            throw InputError(tag + " features must be " + std::to_string(h * w) + "x" + std::to_string(width) +
                             ", got " + view.features->shape_string());
    }
    const std::size_t total = views.size() * h * w;
    rep.positions.reserve(total);
    rep.colors.reserve(total);
    rep.view_of.reserve(total);
    rep.features = Tensor2<float>(total, width);
    std::size_t row = 0;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto& view = views[i];
        auto points = unproject(view.depth, view.camera);
        for (std::size_t p = 0; p < points.size(); ++p, ++row) {
            rep.positions.push_back(points[p]);
            const Vec3f color{view.colors(p, 0), view.colors(p, 1), view.colors(p, 2)};
            rep.colors.push_back(color);
            rep.view_of.push_back(static_cast<std::uint32_t>(i));
            auto dst = rep.features.row(row);
            if (view.features) {
                auto src = view.features->row(p);
                std::copy(src.begin(), src.end(), dst.begin());
            } else {
                for (std::size_t c = 0; c < width; ++c) dst[c] = color[c % 3];
            }
        }
    }
    rep.validate();
    return rep;
}

}  // namespace zsplat

#endif  // ZSPLAT_SCENE_HPP
