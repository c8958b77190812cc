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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "zsplat/errors.hpp"
#include "zsplat/scene.hpp"
#include "zsplat/synthetic.hpp"
#include "test_util.hpp"

namespace zsplat {
namespace {

Camera unit_camera() { return Camera::translated(1, 1, 0, 0, {0, 0, 0}); }

DepthMap constant_depth(std::size_t w, std::size_t h, float z) { return {w, h, std::vector<float>(w * h, z)}; }

TEST(CameraTest, ValidatesRotationAndLastRow) {
    auto cam = unit_camera();
    EXPECT_NO_THROW(cam.validate());
    cam.cam_to_world[0] = 1.1;
    EXPECT_THROW(cam.validate(), InputError);
    cam = unit_camera();
    cam.cam_to_world[12] = 0.5;
    EXPECT_THROW(cam.validate(), InputError);
    cam = unit_camera();
    cam.fx = 0;
    EXPECT_THROW(cam.validate(), InputError);
}

TEST(UnprojectTest, PinholeIdentity) {
    const auto pts = unproject(constant_depth(1, 1, 2.0f), unit_camera());
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_EQ(pts[0], (Vec3f{0, 0, 2}));
}

TEST(UnprojectTest, UnitFocal) {
    DepthMap d = constant_depth(4, 5, 1.0f);
    const auto pts = unproject(d, unit_camera());
    EXPECT_EQ(pts[4 * 4 + 3], (Vec3f{3, 4, 1}));
}

TEST(UnprojectTest, TranslationIsAdditive) {
    const auto pts = unproject(constant_depth(1, 1, 2.0f), Camera::translated(1, 1, 0, 0, {1, 0, 0}));
    EXPECT_EQ(pts[0], (Vec3f{1, 0, 2}));
}

TEST(UnprojectTest, NonPositiveDepthRejected) {
    auto d = constant_depth(2, 2, 1.0f);
    d.values[3] = 0.0f;
    EXPECT_THROW(unproject(d, unit_camera()), InputError);
    d.values[3] = -1.0f;
    EXPECT_THROW(unproject(d, unit_camera()), InputError);
}

TEST(UnprojectTest, ProjectRecoversPixel) {
    // Rotation about y by 30 degrees plus a translation.
    Camera cam{300, 280, 31.5, 22.0};
    const double c = std::cos(0.5235987755982988), s = std::sin(0.5235987755982988);
    const double m[16] = {c, 0, s, 0.3, 0, 1, 0, -0.2, -s, 0, c, 1.5, 0, 0, 0, 1};
    std::copy(m, m + 16, cam.cam_to_world.begin());
    SplitMix64 rng(3);
    DepthMap d{64, 48, std::vector<float>(64 * 48)};
    for (auto& z : d.values) z = static_cast<float>(rng.uniform(0.5, 8.0));
    const auto pts = unproject(d, cam);
    for (std::size_t v = 0; v < 48; ++v)
        for (std::size_t u = 0; u < 64; ++u) {
            const auto& p = pts[v * 64 + u];
            const auto uvz = project(cam, {p[0], p[1], p[2]});
            EXPECT_NEAR(uvz[0], static_cast<double>(u), 1e-4);
            EXPECT_NEAR(uvz[1], static_cast<double>(v), 1e-4);
            EXPECT_NEAR(uvz[2], d.at(u, v), 1e-4);
        }
}

ViewInput flat_view(std::size_t w, std::size_t h, double tx, std::optional<std::size_t> feature_width) {
    ViewInput v;
    v.depth = constant_depth(w, h, 1.0f);
    v.camera = Camera::translated(1, 1, 0, 0, {tx, 0, 0});
    v.colors = Tensor2<float>(w * h, 3);
    for (std::size_t i = 0; i < w * h; ++i)
        for (std::size_t c = 0; c < 3; ++c) v.colors(i, c) = 0.1f * static_cast<float>(c + 1);
    if (feature_width) {
        Tensor2<float> f(w * h, *feature_width);
        for (auto& x : f.data) x = 0.25f;
        v.features = f;
    }
    return v;
}

TEST(AssembleTest, TwoViewsConcatenate) {
    const std::vector<ViewInput> views{flat_view(4, 4, 0, 8), flat_view(4, 4, 10, 8)};
    const auto rep = assemble(views, 8);
    ASSERT_EQ(rep.size(), 32u);
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(rep.view_of[i], i < 16 ? 0u : 1u);
    EXPECT_EQ(rep.positions[16][0], 10.0f);
    EXPECT_NO_THROW(rep.validate());
}

TEST(AssembleTest, SingleViewEqualsUnproject) {
    const std::vector<ViewInput> views{flat_view(3, 2, 0.5, 4)};
    const auto rep = assemble(views, 4);
    EXPECT_EQ(rep.positions, unproject(views[0].depth, views[0].camera));
}

TEST(AssembleTest, MissingFeaturesRepeatColors) {
    const std::vector<ViewInput> views{flat_view(2, 2, 0, std::nullopt)};
    const auto rep = assemble(views, 7);
    ASSERT_EQ(rep.feature_width(), 7u);
    for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(rep.features(0, c), views[0].colors(0, c % 3));
}

TEST(AssembleTest, InconsistentShapesRejected) {
    std::vector<ViewInput> views{flat_view(4, 4, 0, 8), flat_view(4, 3, 0, 8)};
    EXPECT_THROW(assemble(views, 8), InputError);
    views = {flat_view(4, 4, 0, 8), flat_view(4, 4, 0, 6)};
    EXPECT_THROW(assemble(views, 8), InputError);
}

TEST(AssembleTest, LengthIsSumOfPixels) {
    const std::vector<ViewInput> views{flat_view(5, 3, 0, 2), flat_view(5, 3, 1, 2), flat_view(5, 3, 2, 2)};
    EXPECT_EQ(assemble(views, 2).size(), 45u);
}

TEST(SyntheticTest, PlaneDepthIsExact) {
    const auto scene = SyntheticScene::two_view_plane(16);
    const auto views = scene.render();
    ASSERT_EQ(views.size(), 2u);
    for (const auto& v : views)
        for (float z : v.depth.values) EXPECT_EQ(z, 2.0f);
    const auto rep = assemble(views, kDefaultFeatureWidth);
    for (const auto& p : rep.positions) EXPECT_FLOAT_EQ(p[2], 2.0f);
    // Pixels sit on a lattice of the plane spacing.
    for (const auto& p : rep.positions) {
        const double k = p[0] / scene.plane_spacing();
        EXPECT_NEAR(k, std::round(k), 1e-6);
    }
}

TEST(SyntheticTest, SphereHitsAreOnSurfaceOrPlane) {
    nlohmann::json j = {{"type", "sphere"}, {"resolution", 24}, {"poses", {{{"translation", {0, 0, 0}}}}}};
    const auto scene = SyntheticScene::from_json(j);
    const auto views = scene.render();
    const auto pts = unproject(views[0].depth, views[0].camera);
    std::size_t on_sphere = 0;
    for (const auto& p : pts) {
        const double dx = p[0] - 0.0, dy = p[1] - 0.0, dz = p[2] - 1.5;
        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (std::abs(r - 0.5) < 1e-4) ++on_sphere;
        else EXPECT_NEAR(p[2], 2.0, 1e-5);
    }
    EXPECT_GT(on_sphere, 0u);
}

TEST(SyntheticTest, ConfigErrors) {
    EXPECT_THROW(SyntheticScene::from_json({{"type", "torus"}, {"poses", nlohmann::json::array()}}), InputError);
    EXPECT_THROW(SyntheticScene::from_json({{"type", "plane"}, {"poses", nlohmann::json::array()}}), InputError);
    EXPECT_THROW(SyntheticScene::from_json({{"poses", {{1, 2, 3}}}}), InputError);
}

TEST(SceneDirTest, WriteReadRoundtrip) {
    testing::TempDir dir;
    const auto views = SyntheticScene::two_view_plane(8).render();
    write_scene(dir.path(), views);
    const auto back = read_scene(dir.path());
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].depth.values, views[i].depth.values);
        EXPECT_EQ(back[i].camera, views[i].camera);
        EXPECT_EQ(back[i].colors, views[i].colors);
        ASSERT_TRUE(back[i].features.has_value());
        EXPECT_EQ(*back[i].features, *views[i].features);
    }
}

TEST(SceneDirTest, EightBitColorsAreNormalized) {
    testing::TempDir dir;
    auto views = SyntheticScene::two_view_plane(4).render();
    for (auto& c : views[0].colors.data) c = 255.0f;
    write_scene(dir.path(), views);
    const auto back = read_scene(dir.path());
    for (float c : back[0].colors.data) EXPECT_EQ(c, 1.0f);
}

TEST(SceneDirTest, MissingCameraNamesView) {
    testing::TempDir dir;
    write_scene(dir.path(), SyntheticScene::two_view_plane(4).render());
    std::filesystem::remove(dir / "view_1/camera.json");
    try {
        read_scene(dir.path());
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("view_1"), std::string::npos) << e.what();
    }
}

}  // namespace
}  // namespace zsplat
