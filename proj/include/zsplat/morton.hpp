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

#ifndef ZSPLAT_MORTON_HPP
#define ZSPLAT_MORTON_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zsplat/errors.hpp"
#include "zsplat/point_representation.hpp"

namespace zsplat {

/// Bits per axis that still fit three interleaved coordinates in one 64-bit word.
inline constexpr int kMaxDepth = 21;
inline constexpr int kDefaultSerializeDepth = 16;

using GridCoord = std::array<std::uint32_t, 3>;

/// Interleaved (Morton) code of a grid cell at `depth` bits per axis.
struct ZCode {
    std::uint64_t value = 0;
    int depth = 0;

    friend bool operator==(const ZCode&, const ZCode&) = default;
    friend auto operator<=>(const ZCode&, const ZCode&) = default;
};

/// Maps world points to integer grid cells: floor((p - origin) / cell),
/// clamped to [0, 2^depth - 1] per axis.
struct Quantizer {
    Vec3d origin{0.0, 0.0, 0.0};
    double cell = 1.0;
    int depth = kDefaultSerializeDepth;

    void validate() const {
        if (!(cell > 0.0) || !std::isfinite(cell)) throw InputError("quantizer cell size must be positive");
        if (depth < 0 || depth > kMaxDepth)
            throw RangeError("quantizer depth " + std::to_string(depth) + " outside [0, " +
                             std::to_string(kMaxDepth) + "]");
        for (double o : origin)
            if (!std::isfinite(o)) throw InputError("quantizer origin must be finite");
    }

    std::uint32_t max_coord() const { return depth == 0 ? 0u : static_cast<std::uint32_t>((1ull << depth) - 1); }

    /// Same origin, cells 2^levels times larger, depth reduced by `levels`.
    /// Cell c of the coarse grid is cell (c >> levels) of this one.
    Quantizer coarsened(int levels) const {
        if (levels < 0 || levels > depth)
            throw RangeError("cannot coarsen depth " + std::to_string(depth) + " by " + std::to_string(levels));
        return {origin, std::ldexp(cell, levels), depth - levels};
    }

    Vec3d cell_center(const GridCoord& c) const {
        return {origin[0] + (c[0] + 0.5) * cell, origin[1] + (c[1] + 0.5) * cell, origin[2] + (c[2] + 0.5) * cell};
    }

    Vec3d cell_min(const GridCoord& c) const {
        return {origin[0] + c[0] * cell, origin[1] + c[1] * cell, origin[2] + c[2] * cell};
    }
};

namespace detail {

inline void check_depth(int d) {
    if (d < 0 || d > kMaxDepth)
        throw RangeError("depth " + std::to_string(d) + " exceeds the 64-bit code budget (max " +
                         std::to_string(kMaxDepth) + ")");
}

inline std::uint64_t spread_bits(std::uint64_t v) {
    v &= 0x1fffffULL;
    v = (v | v << 32) & 0x1f00000000ffffULL;
    v = (v | v << 16) & 0x1f0000ff0000ffULL;
    v = (v | v << 8) & 0x100f00f00f00f00fULL;
    v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
    v = (v | v << 2) & 0x1249249249249249ULL;
    return v;
}

inline std::uint32_t compact_bits(std::uint64_t v) {
    v &= 0x1249249249249249ULL;
    v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
    v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
    v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
    v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
    v = (v ^ (v >> 32)) & 0x1fffffULL;
    return static_cast<std::uint32_t>(v);
}

template <class Range>
std::pair<Vec3d, Vec3d> bounding_box(const Range& points) {
    Vec3d lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity()};
    Vec3d hi{-lo[0], -lo[1], -lo[2]};
    for (const auto& p : points)
        for (int a = 0; a < 3; ++a) {
            const double v = static_cast<double>(p[a]);
            if (!std::isfinite(v)) throw InputError("non-finite point coordinate");
            lo[a] = std::min(lo[a], v);
            hi[a] = std::max(hi[a], v);
        }
    return {lo, hi};
}

}  // namespace detail

/// Bounding box of `points` expanded by 0.1% of its largest extent, with
/// cell = expanded extent / 2^depth.
inline Quantizer fit_quantizer(std::span<const Vec3f> points, int depth = kDefaultSerializeDepth) {
    detail::check_depth(depth);
    if (depth == 0) throw RangeError("quantizer depth must be at least 1");
    if (points.empty()) throw InputError("empty point set");
    auto [lo, hi] = detail::bounding_box(points);
    double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    if (!(extent > 0.0)) extent = 1.0;
    const double pad = 0.0005 * extent;
    Quantizer q{{lo[0] - pad, lo[1] - pad, lo[2] - pad}, (extent + 2.0 * pad) / std::ldexp(1.0, depth), depth};
    q.validate();
    return q;
}

/// Fixed cell size; origin half a cell below the bounding-box minimum so that
/// points on a lattice of spacing `cell` sit at cell centers.
inline Quantizer fit_quantizer_with_cell(std::span<const Vec3f> points, double cell, int depth) {
    detail::check_depth(depth);
    if (points.empty()) throw InputError("empty point set");
    auto [lo, hi] = detail::bounding_box(points);
    Quantizer q{{lo[0] - 0.5 * cell, lo[1] - 0.5 * cell, lo[2] - 0.5 * cell}, cell, depth};
    q.validate();
    return q;
}

/// Grid aligned to multiples of `cell` (cells are floor(p / cell)), shifted so
/// the lowest occupied cell has index 0.
inline Quantizer aligned_quantizer(std::span<const Vec3f> points, double cell, int depth) {
    detail::check_depth(depth);
    if (points.empty()) throw InputError("empty point set");
    if (!(cell > 0.0)) throw InputError("quantizer cell size must be positive");
    auto [lo, hi] = detail::bounding_box(points);
    Quantizer q{{std::floor(lo[0] / cell) * cell, std::floor(lo[1] / cell) * cell, std::floor(lo[2] / cell) * cell},
                cell, depth};
    q.validate();
    return q;
}

inline GridCoord quantize(const Quantizer& q, const Vec3d& p) {
    GridCoord out{};
    const double top = static_cast<double>(q.max_coord());
    for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(p[a])) throw InputError("cannot quantize a non-finite point");
        const double cell = std::floor((p[a] - q.origin[a]) / q.cell);
        out[a] = static_cast<std::uint32_t>(std::clamp(cell, 0.0, top));
    }
    return out;
}

inline GridCoord quantize(const Quantizer& q, const Vec3f& p) {
    return quantize(q, Vec3d{p[0], p[1], p[2]});
}

/// Bit i of x, y, z lands at bit 3i, 3i+1, 3i+2 of the code.
inline ZCode encode(std::uint32_t x, std::uint32_t y, std::uint32_t z, int depth) {
    detail::check_depth(depth);
    const std::uint64_t limit = 1ull << depth;
    if (x >= limit || y >= limit || z >= limit)
        throw RangeError("coordinate (" + std::to_string(x) + ", " + std::to_string(y) + ", " + std::to_string(z) +
                         ") does not fit in " + std::to_string(depth) + " bits");
    return {detail::spread_bits(x) | detail::spread_bits(y) << 1 | detail::spread_bits(z) << 2, depth};
}

inline ZCode encode(const GridCoord& c, int depth) { return encode(c[0], c[1], c[2], depth); }

inline GridCoord decode(const ZCode& c) {
    detail::check_depth(c.depth);
    if (c.depth < kMaxDepth && c.value >> (3 * c.depth) != 0)
        throw RangeError("code " + std::to_string(c.value) + " exceeds depth " + std::to_string(c.depth));
    if (c.value >> 63 != 0) throw RangeError("code uses bit 63");
    return {detail::compact_bits(c.value), detail::compact_bits(c.value >> 1), detail::compact_bits(c.value >> 2)};
}

/// Drops `levels` whole coordinate levels (3 bits each) from the code.
inline ZCode shift(const ZCode& c, int levels) {
    if (levels < 0 || levels > c.depth)
        throw RangeError("shift by " + std::to_string(levels) + " levels exceeds depth " + std::to_string(c.depth));
    return {levels == kMaxDepth ? 0 : c.value >> (3 * levels), c.depth - levels};
}

struct SortedRepresentation {
    PointRepresentation rep;
    std::vector<ZCode> codes;
    std::vector<std::size_t> permutation;  // rep[i] = input[permutation[i]]
};

inline std::vector<ZCode> compute_codes(std::span<const Vec3f> positions, const Quantizer& q) {
    q.validate();
    std::vector<ZCode> codes;
    codes.reserve(positions.size());
    for (const auto& p : positions) codes.push_back(encode(quantize(q, p), q.depth));
    return codes;
}

/// Stable ascending sort by (code, original index).
inline std::vector<std::size_t> code_order(std::span<const ZCode> codes) {
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) keyed[i] = {codes[i].value, i};
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> order(codes.size());
    for (std::size_t i = 0; i < keyed.size(); ++i) order[i] = keyed[i].second;
    return order;
}

inline SortedRepresentation sort_by_code(const PointRepresentation& points, const Quantizer& q) {
    if (points.empty()) throw InputError("empty point set");
    points.validate();
    const auto codes = compute_codes(points.positions, q);
    SortedRepresentation out;
    out.permutation = code_order(codes);
    out.rep = points.permuted(out.permutation);
    out.codes.reserve(codes.size());
    for (std::size_t i : out.permutation) out.codes.push_back(codes[i]);
    return out;
}

}  // namespace zsplat

#endif  // ZSPLAT_MORTON_HPP
