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

#ifndef ZSPLAT_PIPELINE_HPP
#define ZSPLAT_PIPELINE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "zsplat/checkpoint.hpp"
#include "zsplat/config.hpp"
#include "zsplat/gaussian_head.hpp"
#include "zsplat/morton.hpp"
#include "zsplat/scene.hpp"
#include "zsplat/zformer.hpp"

namespace zsplat {

/// One pooled level of the multi-level output.
struct Level {
    PointRepresentation rep;
    Quantizer quantizer;
    std::vector<GaussianPrimitive> gaussians;
};

struct ForwardResult {
    std::size_t input_points = 0;
    Quantizer input_quantizer;
    std::vector<Level> levels;  // one per block, finest first
};

/// Median pixel footprint depth / fx over all views. On a lattice-sampled
/// surface this is the sample spacing, so a cell of this size holds one point.
inline double pixel_footprint(std::span<const ViewInput> views) {
    std::vector<double> samples;
    for (const auto& v : views) {
        const double f = std::max(v.camera.fx, v.camera.fy);
        for (float z : v.depth.values) samples.push_back(static_cast<double>(z) / f);
    }
    if (samples.empty()) throw InputError("empty point set");
    auto mid = samples.begin() + static_cast<std::ptrdiff_t>(samples.size() / 2);
    std::nth_element(samples.begin(), mid, samples.end());
    return *mid;
}

/// Serialization grid for the first block: the padded bounding box split
/// into 2^depth cells, a fixed cell size, or the median pixel footprint. A
/// fixed or footprint cell grows when 2^depth cells would not span the scene.
inline Quantizer scene_quantizer(std::span<const Vec3f> points, const RunConfig& cfg,
                                 std::span<const ViewInput> views) {
    const int depth = cfg.attention.serialize_depth;
    if (points.empty()) throw InputError("empty point set");
    if (!cfg.pixel_cells && !(cfg.cell_size > 0.0)) return fit_quantizer(points, depth);
    double cell = cfg.pixel_cells ? pixel_footprint(views) : cfg.cell_size;
    auto [lo, hi] = detail::bounding_box(points);
    const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    const double span_cells = std::ldexp(1.0, depth) - 1.0;
    if (extent + cell > span_cells * cell) cell = (extent * 1.001) / std::max(1.0, span_cells - 1.0);
    if (!(cell > 0.0)) cell = 1.0;
    return fit_quantizer_with_cell(points, cell, depth);
}

/// assemble -> num_blocks x zformer_block -> head on every level. Each level's
/// center offsets are bounded by twice its cell size.
inline ForwardResult run_forward(std::span<const ViewInput> views, const RunConfig& cfg, const Checkpoint& ckpt) {
    cfg.validate();
    if (ckpt.blocks.size() != cfg.num_blocks)
        throw CheckpointError("checkpoint holds " + std::to_string(ckpt.blocks.size()) + " blocks, config expects " +
                              std::to_string(cfg.num_blocks));
    auto rep = assemble(views, cfg.attention.model_width);
    if (rep.empty()) throw InputError("empty point set");
    ForwardResult out;
    out.input_points = rep.size();
    out.input_quantizer = scene_quantizer(rep.positions, cfg, views);
    Quantizer q = out.input_quantizer;
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        auto block = zformer_block(rep, q, ckpt.blocks[b], cfg.attention);
        Level level;
        level.quantizer = block.quantizer;
        level.gaussians = predict(block.rep, ckpt.head, 2.0 * block.quantizer.cell);
        level.rep = block.rep;
        rep = std::move(block.rep);
        q = block.quantizer;
        out.levels.push_back(std::move(level));
    }
    return out;
}

}  // namespace zsplat

#endif  // ZSPLAT_PIPELINE_HPP
