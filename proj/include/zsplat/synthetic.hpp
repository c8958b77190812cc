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

#ifndef ZSPLAT_SYNTHETIC_HPP
#define ZSPLAT_SYNTHETIC_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsplat/errors.hpp"
#include "zsplat/io.hpp"
#include "zsplat/scene.hpp"

namespace zsplat {

/// Analytic test scenes with exact depth. Config JSON:
///   {"type": "plane" | "sphere",
///    "resolution": [W, H] or N,
///    "poses": [ [16 row-major numbers] | {"translation": [x, y, z]} ... ],
///    optional: "fx", "fy", "cx", "cy", "plane_z", "sphere_center", "sphere_radius",
///              "feature_width"}
/// Plane scenes intersect every pixel ray with the world plane z = plane_z.
/// Sphere scenes hit a sphere and fall back to the plane behind it.
struct SyntheticScene {
    std::string type = "plane";
    std::size_t width = 32, height = 32;
    double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;  // zero: fx = fy = width, principal point at the center
    std::vector<Camera> cameras;
    double plane_z = 2.0;
    Vec3d sphere_center{0.0, 0.0, 1.5};
    double sphere_radius = 0.5;
    std::size_t feature_width = kDefaultFeatureWidth;

    static SyntheticScene from_json(const nlohmann::json& j) {
        SyntheticScene s;
        try {
            s.type = j.value("type", std::string("plane"));
            if (s.type != "plane" && s.type != "sphere") throw InputError("unknown scene type '" + s.type + "'");
            if (j.contains("resolution")) {
                const auto& r = j["resolution"];
                if (r.is_array()) {
                    s.width = r.at(0).get<std::size_t>();
                    s.height = r.at(1).get<std::size_t>();
                } else {
                    s.width = s.height = r.get<std::size_t>();
                }
            }
            s.fx = j.value("fx", 0.0);
            s.fy = j.value("fy", 0.0);
            s.cx = j.value("cx", 0.0);
            s.cy = j.value("cy", 0.0);
            s.plane_z = j.value("plane_z", 2.0);
            s.sphere_radius = j.value("sphere_radius", 0.5);
            if (j.contains("sphere_center"))
                for (int a = 0; a < 3; ++a) s.sphere_center[a] = j["sphere_center"].at(a).get<double>();
            s.feature_width = j.value("feature_width", kDefaultFeatureWidth);
            s.apply_intrinsic_defaults();
            for (const auto& pose : j.at("poses")) {
                Camera cam{s.fx, s.fy, s.cx, s.cy};
                if (pose.is_object()) {
                    const auto& t = pose.at("translation");
                    cam = Camera::translated(s.fx, s.fy, s.cx, s.cy,
                                             {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()});
                } else {
                    if (pose.size() != 16) throw InputError("pose matrices need 16 numbers");
                    for (std::size_t i = 0; i < 16; ++i) cam.cam_to_world[i] = pose[i].get<double>();
                }
                cam.validate();
                s.cameras.push_back(cam);
            }
        } catch (const nlohmann::json::exception& e) {
            throw InputError(std::string("invalid scene config: ") + e.what());
        }
        if (s.width == 0 || s.height == 0) throw InputError("scene resolution must be positive");
        if (s.cameras.empty()) throw InputError("scene config needs at least one pose");
        return s;
    }

    /// Two translated views of a fronto-parallel plane; the reference scene of
    /// the forward pipeline. Pixels land on a lattice of spacing plane_z / width.
    static SyntheticScene two_view_plane(std::size_t resolution) {
        SyntheticScene s;
        s.width = s.height = resolution;
        s.apply_intrinsic_defaults();
        const double spacing = s.plane_z / s.fx;
        s.cameras = {Camera::translated(s.fx, s.fy, s.cx, s.cy, {0.0, 0.0, 0.0}),
                     Camera::translated(s.fx, s.fy, s.cx, s.cy,
                                        {spacing * static_cast<double>(resolution / 4), 0.0, 0.0})};
        return s;
    }

    /// Distance between neighbouring pixel samples on the plane for an
    /// unrotated camera at z = 0.
    double plane_spacing() const { return plane_z / fx; }

    void apply_intrinsic_defaults() {
        if (fx <= 0.0) fx = static_cast<double>(width);
        if (fy <= 0.0) fy = static_cast<double>(width);
        if (cx == 0.0 && cy == 0.0) {
            cx = static_cast<double>(width) / 2.0;
            cy = static_cast<double>(height) / 2.0;
        }
    }

    std::vector<ViewInput> render() const {
        std::vector<ViewInput> views;
        for (const auto& cam : cameras) {
            ViewInput view;
            view.camera = cam;
            view.depth = {width, height, std::vector<float>(width * height)};
            view.colors = Tensor2<float>(width * height, 3);
            Tensor2<float> features(width * height, feature_width);
            const Vec3d origin{cam.pose(0, 3), cam.pose(1, 3), cam.pose(2, 3)};
            for (std::size_t v = 0; v < height; ++v)
                for (std::size_t u = 0; u < width; ++u) {
                    const Vec3d dir_cam{(static_cast<double>(u) - cam.cx) / cam.fx,
                                        (static_cast<double>(v) - cam.cy) / cam.fy, 1.0};
                    Vec3d dir{};
                    for (int r = 0; r < 3; ++r)
                        dir[r] = cam.pose(r, 0) * dir_cam[0] + cam.pose(r, 1) * dir_cam[1] + cam.pose(r, 2) * dir_cam[2];
                    double t = hit_distance(origin, dir);
                    if (!(t > 0.0))
                        throw InputError("pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                                         ") does not see the scene");
                    const std::size_t pix = v * width + u;
                    view.depth.values[pix] = static_cast<float>(t);
                    const Vec3d p{origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]};
                    const auto color = shade(p);
                    for (int c = 0; c < 3; ++c) view.colors(pix, static_cast<std::size_t>(c)) = color[c];
                    for (std::size_t c = 0; c < feature_width; ++c) {
                        const double freq = 1.0 + static_cast<double>(c / 6);
                        const double phase = p[c % 3] * freq * 3.0;
                        features(pix, c) = static_cast<float>((c / 3) % 2 == 0 ? std::sin(phase) : std::cos(phase));
                    }
                }
            view.features = std::move(features);
            views.push_back(std::move(view));
        }
        return views;
    }

private:
    /// Ray parameter along `dir` (whose camera-space z is 1), i.e. the depth.
    double hit_distance(const Vec3d& o, const Vec3d& d) const {
        double plane_t = std::abs(d[2]) > 1e-12 ? (plane_z - o[2]) / d[2] : -1.0;
        if (type == "plane") return plane_t;
        Vec3d oc{o[0] - sphere_center[0], o[1] - sphere_center[1], o[2] - sphere_center[2]};
        const double a = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        const double b = 2.0 * (oc[0] * d[0] + oc[1] * d[1] + oc[2] * d[2]);
        const double c = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - sphere_radius * sphere_radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
            const double t = (-b - std::sqrt(disc)) / (2.0 * a);
            if (t > 0.0) return t;
        }
        return plane_t;
    }

    static std::array<float, 3> shade(const Vec3d& p) {
        const bool check = (static_cast<long>(std::floor(p[0] * 4.0)) + static_cast<long>(std::floor(p[1] * 4.0))) % 2 == 0;
        const double base = check ? 0.8 : 0.2;
        auto unit = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); };
        return {unit(base), unit(0.5 + 0.4 * std::sin(p[0] * 3.0)), unit(0.5 + 0.4 * std::cos(p[1] * 3.0 + p[2]))};
    }
};

/// Writes view_<i>/{depth.tns, camera.json, color.tns, feature.tns}.
inline void write_scene(const std::filesystem::path& dir, const std::vector<ViewInput>& views) {
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto vdir = dir / ("view_" + std::to_string(i));
        std::filesystem::create_directories(vdir);
        const auto& v = views[i];
        write_tensor(vdir / "depth.tns", TensorFile{{v.depth.height, v.depth.width}, v.depth.values});
        write_camera(vdir / "camera.json", v.camera);
        write_tensor(vdir / "color.tns", TensorFile{{v.depth.height, v.depth.width, 3}, v.colors.data});
        if (v.features)
            write_tensor(vdir / "feature.tns",
                         TensorFile{{v.depth.height, v.depth.width, v.features->cols}, v.features->data});
    }
}

/// Reads view_0, view_1, ... until the next directory is missing. Colors with
/// values above 1 are taken as 8-bit and divided by 255. feature.tns is optional.
inline std::vector<ViewInput> read_scene(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw InputError("scene directory " + dir.string() + " does not exist");
    std::vector<ViewInput> views;
    for (std::size_t i = 0;; ++i) {
        const std::string name = "view_" + std::to_string(i);
        const auto vdir = dir / name;
        if (!std::filesystem::is_directory(vdir)) break;
        for (const char* required : {"depth.tns", "camera.json", "color.tns"})
            if (!std::filesystem::exists(vdir / required))
                throw InputError(name + ": missing " + std::string(required));
        ViewInput view;
        const auto depth = read_tensor(vdir / "depth.tns");
        if (depth.shape.size() != 2) throw InputError(name + ": depth.tns must be H x W");
        view.depth = {depth.shape[1], depth.shape[0], depth.to_f32()};
        try {
            view.camera = read_camera(vdir / "camera.json");
        } catch (const Error& e) {
            throw InputError(name + ": " + e.what());
        }
        const auto color = read_tensor(vdir / "color.tns");
        view.colors = color.to_matrix();
        if (view.colors.cols != 3) throw InputError(name + ": color.tns must end in a dimension of 3");
        float peak = 0.0f;
        for (float c : view.colors.data) peak = std::max(peak, c);
        if (peak > 1.0f)
            for (auto& c : view.colors.data) c /= 255.0f;
        if (std::filesystem::exists(vdir / "feature.tns")) view.features = read_tensor(vdir / "feature.tns").to_matrix();
        views.push_back(std::move(view));
    }
    if (views.empty()) throw InputError("scene directory " + dir.string() + " holds no view_0");
    return views;
}

}  // namespace zsplat

#endif  // ZSPLAT_SYNTHETIC_HPP
