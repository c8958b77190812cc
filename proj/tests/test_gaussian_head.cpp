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
#include "zsplat/gaussian_head.hpp"
#include "zsplat/gradcheck.hpp"
#include "zsplat/verify.hpp"

namespace zsplat {
namespace {

HeadParams<float> zero_head(std::size_t width, std::size_t hidden = 16) {
    auto p = init_head<float>(width, hidden, 1);
    for (auto* l : {&p.layer1, &p.layer2}) {
        std::fill(l->weight.data.begin(), l->weight.data.end(), 0.0f);
        std::fill(l->bias.begin(), l->bias.end(), 0.0f);
    }
    return p;
}

PointRepresentation single_point(const Vec3f& pos, const Vec3f& color, std::size_t width) {
    PointRepresentation rep;
    rep.positions = {pos};
    rep.colors = {color};
    rep.view_of = {0};
    rep.features = Tensor2<float>(1, width);
    for (std::size_t c = 0; c < width; ++c) rep.features(0, c) = 0.3f * static_cast<float>(c % 5) - 0.6f;
    return rep;
}

TEST(PredictTest, ZeroHeadOnGray) {
    const auto g = predict(single_point({1, 2, 3}, {0.5f, 0.5f, 0.5f}, 8), zero_head(8), 0.1)[0];
    EXPECT_EQ(g.center, (Vec3f{1, 2, 3}));
    EXPECT_EQ(g.opacity, 0.5f);
    EXPECT_EQ(g.rotation, (std::array<float, 4>{1, 0, 0, 0}));
    EXPECT_EQ(g.scale, (Vec3f{1, 1, 1}));
    for (float c : g.sh) EXPECT_EQ(c, 0.0f);
}

TEST(PredictTest, ZeroHeadDcConvention) {
    const auto g = predict(single_point({0, 0, 0}, {1, 0, 0}, 8), zero_head(8), 0.1)[0];
    EXPECT_FLOAT_EQ(g.sh[0], static_cast<float>(0.5 / 0.28209479177));
    EXPECT_FLOAT_EQ(g.sh[1], static_cast<float>(-0.5 / 0.28209479177));
    EXPECT_FLOAT_EQ(g.sh[2], static_cast<float>(-0.5 / 0.28209479177));
    for (std::size_t k = 3; k < kShCoefficients; ++k) EXPECT_EQ(g.sh[k], 0.0f);
}

TEST(PredictTest, ZeroHeadReproducesEveryEightBitColor) {
    const auto p = zero_head(4);
    PointRepresentation rep;
    rep.features = Tensor2<float>(256, 4);
    for (int i = 0; i < 256; ++i) {
        const float c = static_cast<float>(i) / 255.0f;
        rep.positions.push_back({0, 0, 0});
        rep.colors.push_back({c, static_cast<float>(255 - i) / 255.0f, static_cast<float>((i * 7) % 256) / 255.0f});
        rep.view_of.push_back(0);
    }
    const auto gs = predict(rep, p, 0.1);
    for (int i = 0; i < 256; ++i)
        for (int ch = 0; ch < 3; ++ch) {
            // float SH storage keeps the color to 1e-7 and the 8-bit value exactly.
            EXPECT_NEAR(color_from_sh(gs[i].sh[ch]), rep.colors[i][ch], 1e-7) << i;
            EXPECT_EQ(pixel_from_sh(gs[i].sh[ch]), std::lround(255.0 * rep.colors[i][ch])) << i;
        }
}

TEST(PredictTest, WidthMismatchIsConfigError) {
    EXPECT_THROW(predict(single_point({0, 0, 0}, {0, 0, 0}, 6), zero_head(8), 0.1), ConfigError);
}

TEST(PredictTest, EmptyInputGivesEmptyOutput) {
    PointRepresentation rep;
    rep.features = Tensor2<float>(0, 8);
    EXPECT_TRUE(predict(rep, init_head<float>(8, 16, 1), 0.1).empty());
}

TEST(PredictTest, RandomInputsAreValidAndLocal) {
    SplitMix64 rng(77);
    const std::size_t n = 2000, w = 12;
    auto p = init_head<float>(w, 32, 5);
    // Large weights push raw outputs into every clamp.
    for (auto& v : p.layer2.weight.data) v *= 40.0f;
    PointRepresentation rep;
    rep.features = verify::random_features(n, w, rng);
    for (auto& v : rep.features.data) v *= 5.0f;
    for (std::size_t i = 0; i < n; ++i) {
        rep.positions.push_back({static_cast<float>(rng.uniform(-10, 10)), 0.0f, 1.0f});
        rep.colors.push_back({static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()), 0.0f});
        rep.view_of.push_back(0);
    }
    const double offset_scale = 0.25;
    const auto gs = predict(rep, p, offset_scale);
    for (std::size_t i = 0; i < n; ++i) {
        EXPECT_FALSE(gs[i].violation().has_value()) << i << ": " << gs[i].violation().value_or("");
        for (int a = 0; a < 3; ++a)
            EXPECT_LE(std::abs(static_cast<double>(gs[i].center[a]) - rep.positions[i][a]), offset_scale + 1e-5);
    }
}

TEST(PredictTest, LevelsShareParameters) {
    const auto rep = single_point({0, 0, 0}, {0.2f, 0.4f, 0.6f}, 8);
    auto p = init_head<float>(8, 16, 2);
    const auto [a, b] = predict_multilevel(rep, rep, p, 0.1, 0.1);
    EXPECT_EQ(a, b);
    p.layer2.bias[kRawOpacity] += 1.0f;
    const auto [c, d] = predict_multilevel(rep, rep, p, 0.1, 0.1);
    EXPECT_NE(c[0].opacity, a[0].opacity);
    EXPECT_EQ(c[0].opacity, d[0].opacity);
}

TEST(PredictTest, OffsetSlopeAtZeroIsOffsetScale) {
    auto p = zero_head(4);
    const double scale = 0.375;
    const auto rep = single_point({1, 1, 1}, {0.5f, 0.5f, 0.5f}, 4);
    HeadCache<double> cache;
    const auto pd = p.cast<double>();
    const Tensor2<double> f = rep.features.cast<double>();
    head_outputs(rep.positions, f, rep.colors, pd, scale, &cache);
    Tensor2<double> up(1, kHeadRawWidth);
    up(0, kRawOffset) = 1.0;
    const auto g = head_backward(cache, pd, scale, up);
    // d center_x / d layer2.bias[0] = offset_scale * tanh'(0).
    EXPECT_EQ(g.layer2.bias[kRawOffset], scale);
}

TEST(HeadBackwardTest, GradCheckAllGroups) {
    const auto reports = head_gradient_report(8, 8, 16, 3);
    ASSERT_EQ(reports.size(), 3u);
    for (const auto& r : reports) EXPECT_LT(r.max_rel_error, 1e-4) << r.group;
}

TEST(HeadBackwardTest, GradCheckWider) {
    for (const auto& r : head_gradient_report(32, 8, 24, 9)) EXPECT_LT(r.max_rel_error, 1e-4) << r.group;
}

}  // namespace
}  // namespace zsplat
