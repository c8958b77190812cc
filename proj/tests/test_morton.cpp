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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "zsplat/errors.hpp"
#include "zsplat/morton.hpp"
#include "zsplat/reference.hpp"
#include "zsplat/verify.hpp"

namespace zsplat {
namespace {

TEST(QuantizeTest, FloorDefinition) {
    const Quantizer q{{0, 0, 0}, 1.0, 4};
    EXPECT_EQ(quantize(q, Vec3d{0.9, 1.1, 2.0}), (GridCoord{0, 1, 2}));
}

TEST(QuantizeTest, CellScaling) {
    const Quantizer q{{0, 0, 0}, 0.5, 4};
    EXPECT_EQ(quantize(q, Vec3d{0.9, 1.1, 2.0}), (GridCoord{1, 2, 4}));
}

TEST(QuantizeTest, ClampsOutsideGrid) {
    const Quantizer q{{0, 0, 0}, 1.0, 2};
    EXPECT_EQ(quantize(q, Vec3d{100, 1e9, 7}), (GridCoord{3, 3, 3}));
    EXPECT_EQ(quantize(q, Vec3d{-5, -1e9, -0.1}), (GridCoord{0, 0, 0}));
}

TEST(QuantizeTest, NonFiniteRejected) {
    const Quantizer q{{0, 0, 0}, 1.0, 2};
    EXPECT_THROW(quantize(q, Vec3d{NAN, 0, 0}), InputError);
    EXPECT_THROW(quantize(q, Vec3d{0, INFINITY, 0}), InputError);
}

TEST(EncodeTest, Origin) { EXPECT_EQ(encode(0, 0, 0, 3).value, 0u); }

TEST(EncodeTest, SingleBits) {
    EXPECT_EQ(encode(1, 0, 0, 1).value, 1u);
    EXPECT_EQ(encode(0, 1, 0, 1).value, 2u);
    EXPECT_EQ(encode(0, 0, 1, 1).value, 4u);
}

TEST(EncodeTest, HandExample) {
    EXPECT_EQ(encode(2, 3, 1, 2).value, 30u);
    EXPECT_EQ(reference::encode_loop(2, 3, 1, 2), 30u);
}

TEST(EncodeTest, CoordinateOutOfRange) {
    EXPECT_THROW(encode(4, 0, 0, 2), RangeError);
    EXPECT_THROW(encode(0, 0, 0, 22), RangeError);
}

TEST(EncodeTest, MatchesBitLoopAtEveryDepth) {
    SplitMix64 rng(1);
    for (int d = 1; d <= kMaxDepth; ++d)
        for (int i = 0; i < 2000; ++i) {
            const std::uint64_t mask = (1ull << d) - 1;
            const auto x = rng.next() & mask, y = rng.next() & mask, z = rng.next() & mask;
            ASSERT_EQ(encode(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(z), d)
                          .value,
                      reference::encode_loop(x, y, z, d))
                << "d=" << d;
        }
}

TEST(EncodeTest, MaxCoordinatesFillAllBits) {
    const std::uint32_t m = (1u << kMaxDepth) - 1;
    EXPECT_EQ(encode(m, m, m, kMaxDepth).value, (1ull << 63) - 1);
}

TEST(DecodeTest, Examples) {
    EXPECT_EQ(decode(ZCode{0, 2}), (GridCoord{0, 0, 0}));
    EXPECT_EQ(decode(ZCode{30, 2}), (GridCoord{2, 3, 1}));
}

TEST(DecodeTest, OutOfRangeValue) { EXPECT_THROW(decode(ZCode{64, 2}), RangeError); }

TEST(DecodeTest, ExhaustiveRoundtripDepth4) { EXPECT_EQ(verify::roundtrip_failures(4), 0u); }

TEST(ShiftTest, Examples) {
    EXPECT_EQ(shift(encode(5, 6, 3, 3), 1), encode(2, 3, 1, 2));
    const auto c = encode(2, 3, 1, 2);
    EXPECT_EQ(shift(c, 0), c);
    EXPECT_EQ(shift(c, 2), (ZCode{0, 0}));
    EXPECT_THROW(shift(c, 3), RangeError);
}

TEST(ShiftTest, FullDepthCollapse) {
    const std::uint32_t m = (1u << kMaxDepth) - 1;
    EXPECT_EQ(shift(encode(m, m, m, kMaxDepth), kMaxDepth), (ZCode{0, 0}));
}

TEST(ShiftTest, NestingLawExhaustive) {
    for (int d = 1; d <= 5; ++d)
        for (int h = 1; h <= std::min(d, 3); ++h) EXPECT_EQ(verify::nesting_failures(d, h), 0u) << d << " " << h;
}

TEST(LocalityTest, SharedPrefixMeansSameCube) {
    SplitMix64 rng(4);
    const Quantizer q{{-1, -1, -1}, 0.01, 10};
    for (int i = 0; i < 5000; ++i) {
        Vec3d a{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
        Vec3d b = a;
        for (auto& v : b) v += rng.uniform(-0.05, 0.05);
        const int h = 1 + static_cast<int>(rng.next() % 4);
        const auto ca = encode(quantize(q, a), q.depth), cb = encode(quantize(q, b), q.depth);
        if (shift(ca, h) != shift(cb, h)) continue;
        const double side = std::ldexp(q.cell, h);
        for (int k = 0; k < 3; ++k)
            EXPECT_EQ(std::floor((a[k] - q.origin[k]) / side), std::floor((b[k] - q.origin[k]) / side));
    }
}

TEST(FitQuantizerTest, BoundingBoxPadding) {
    const std::vector<Vec3f> pts{{0, 0, 0}, {2, 1, 1}};
    const auto q = fit_quantizer(pts, 4);
    EXPECT_NEAR(q.cell, 2.002 / 16.0, 1e-12);
    EXPECT_NEAR(q.origin[0], -0.001, 1e-12);
    EXPECT_EQ(quantize(q, pts[1])[0], 15u);
}

TEST(FitQuantizerTest, DegenerateExtentUsesUnitCell) {
    const std::vector<Vec3f> pts{{1, 1, 1}, {1, 1, 1}};
    EXPECT_GT(fit_quantizer(pts, 4).cell, 0.0);
}

TEST(FitQuantizerTest, EmptyInputRejected) {
    EXPECT_THROW(fit_quantizer(std::span<const Vec3f>{}, 4), InputError);
}

TEST(CoarsenTest, CoarseCellContainsFineCell) {
    const Quantizer q{{0.5, -2, 3}, 0.1, 8};
    const auto c = q.coarsened(2);
    EXPECT_EQ(c.depth, 6);
    EXPECT_DOUBLE_EQ(c.cell, 0.4);
    const Vec3d p{1.23, -1.5, 3.9};
    const auto fine = quantize(q, p), coarse = quantize(c, p);
    for (int a = 0; a < 3; ++a) EXPECT_EQ(fine[a] >> 2, coarse[a]);
}

PointRepresentation make_rep(const std::vector<Vec3f>& pts) {
    PointRepresentation rep;
    rep.positions = pts;
    rep.features = Tensor2<float>(pts.size(), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        rep.colors.push_back({0.1f, 0.2f, 0.3f});
        rep.view_of.push_back(static_cast<std::uint32_t>(i));
        rep.features(i, 0) = static_cast<float>(i);
        rep.features(i, 1) = -static_cast<float>(i);
    }
    return rep;
}

TEST(SortByCodeTest, SortedInputIsIdentity) {
    const Quantizer q{{0, 0, 0}, 1.0, 4};
    const auto rep = make_rep({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
    const auto s = sort_by_code(rep, q);
    EXPECT_EQ(s.permutation, (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_EQ(s.rep, rep);
}

TEST(SortByCodeTest, ReversedInputIsReversingPermutation) {
    const Quantizer q{{0, 0, 0}, 1.0, 4};
    const auto rep = make_rep({{1, 1, 0}, {0, 1, 0}, {1, 0, 0}, {0, 0, 0}});
    EXPECT_EQ(sort_by_code(rep, q).permutation, (std::vector<std::size_t>{3, 2, 1, 0}));
}

TEST(SortByCodeTest, StableForEqualCodes) {
    const Quantizer q{{0, 0, 0}, 1.0, 4};
    const auto rep = make_rep({{1.5, 0, 0}, {0.2, 0, 0}, {1.1, 0, 0}, {0.7, 0, 0}});
    EXPECT_EQ(sort_by_code(rep, q).permutation, (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(SortByCodeTest, RandomPointsArePermutedAndMonotone) {
    SplitMix64 rng(8);
    std::vector<Vec3f> pts(1000);
    for (auto& p : pts)
        for (auto& v : p) v = static_cast<float>(rng.uniform(-3, 3));
    const auto rep = make_rep(pts);
    const auto q = fit_quantizer(pts, 6);
    const auto s = sort_by_code(rep, q);
    EXPECT_TRUE(std::is_sorted(s.codes.begin(), s.codes.end()));
    auto perm = s.permutation;
    std::sort(perm.begin(), perm.end());
    std::vector<std::size_t> iota(pts.size());
    std::iota(iota.begin(), iota.end(), 0);
    EXPECT_EQ(perm, iota);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto src = s.permutation[i];
        EXPECT_EQ(s.rep.positions[i], rep.positions[src]);
        EXPECT_EQ(s.rep.features(i, 0), rep.features(src, 0));
        EXPECT_EQ(s.rep.view_of[i], rep.view_of[src]);
        EXPECT_EQ(s.codes[i], encode(quantize(q, rep.positions[src]), q.depth));
    }
    // Ties resolve by original index.
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (s.codes[i] == s.codes[i - 1]) {
            EXPECT_LT(s.permutation[i - 1], s.permutation[i]);
        }
}

TEST(SortByCodeTest, EmptyInputRejected) {
    const Quantizer q{{0, 0, 0}, 1.0, 4};
    EXPECT_THROW(sort_by_code(PointRepresentation{}, q), InputError);
}

}  // namespace
}  // namespace zsplat
