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

#include <vector>

#include <gtest/gtest.h>

#include "zsplat/errors.hpp"
#include "zsplat/io.hpp"
#include "zsplat/parallel.hpp"
#include "zsplat/pipeline.hpp"
#include "zsplat/reference.hpp"
#include "zsplat/synthetic.hpp"

namespace zsplat {
namespace {

RunConfig config(bool pixel_cells) {
    RunConfig c;
    c.pixel_cells = pixel_cells;
    return c;
}

TEST(PipelineTest, CountsMatchGridOracle) {
    const auto views = SyntheticScene::two_view_plane(32).render();
    for (bool pixel : {false, true}) {
        const auto cfg = config(pixel);
        const auto r = run_forward(views, cfg, init_checkpoint(cfg, 1));
        ASSERT_EQ(r.levels.size(), 2u);
        const auto rep = assemble(views, 96);
        const std::size_t m1 = r.levels[0].gaussians.size(), m2 = r.levels[1].gaussians.size();
        EXPECT_EQ(m1, reference::bucket_by_coarse_cell(rep.positions, r.input_quantizer, 2).size());
        EXPECT_EQ(m2, reference::bucket_by_coarse_cell(rep.positions, r.input_quantizer, 4).size());
        EXPECT_LE(m2, m1);
        EXPECT_LE(m1, 2048u);
        for (const auto& level : r.levels)
            for (const auto& g : level.gaussians) EXPECT_FALSE(g.violation().has_value());
    }
}

TEST(PipelineTest, PixelCellsCompressTheReferencePlane) {
    const auto views = SyntheticScene::two_view_plane(32).render();
    const auto cfg = config(true);
    const auto r = run_forward(views, cfg, init_checkpoint(cfg, 1));
    EXPECT_DOUBLE_EQ(r.input_quantizer.cell, 2.0 / 32.0);
    EXPECT_EQ(r.levels[0].gaussians.size(), 80u);  // 40 x 32 pixel lattice in 4 x 4 tiles
    EXPECT_EQ(r.levels[1].gaussians.size(), 6u);
}

TEST(PipelineTest, OffsetsStayWithinTwoCoarseCells) {
    const auto views = SyntheticScene::two_view_plane(16).render();
    const auto cfg = config(true);
    const auto r = run_forward(views, cfg, init_checkpoint(cfg, 4));
    for (const auto& level : r.levels)
        for (std::size_t i = 0; i < level.gaussians.size(); ++i)
            for (int a = 0; a < 3; ++a)
                EXPECT_LE(std::abs(level.gaussians[i].center[a] - level.rep.positions[i][a]),
                          2.0 * level.quantizer.cell + 1e-5);
}

TEST(PipelineTest, DeterministicAcrossThreadCounts) {
    const auto views = SyntheticScene::two_view_plane(32).render();
    const auto cfg = config(false);
    const auto ckpt = init_checkpoint(cfg, 2);
    set_num_threads(1);
    const auto a = run_forward(views, cfg, ckpt);
    set_num_threads(8);
    const auto b = run_forward(views, cfg, ckpt);
    set_num_threads(0);
    for (std::size_t l = 0; l < 2; ++l)
        EXPECT_EQ(encode_gaussians_ply(a.levels[l].gaussians), encode_gaussians_ply(b.levels[l].gaussians));
}

TEST(PipelineTest, CheckpointBlockCountMismatch) {
    const auto views = SyntheticScene::two_view_plane(8).render();
    auto cfg = config(false);
    const auto ckpt = init_checkpoint(cfg, 2);
    cfg.num_blocks = 3;
    EXPECT_THROW(run_forward(views, cfg, ckpt), CheckpointError);
}

TEST(PipelineTest, FixedCellGrowsToSpanScene) {
    const std::vector<Vec3f> pts{{0, 0, 0}, {100, 0, 0}};
    RunConfig cfg;
    cfg.cell_size = 1e-4;
    cfg.attention.serialize_depth = 8;
    const auto q = scene_quantizer(pts, cfg, {});
    EXPECT_LT(quantize(q, pts[1])[0], 255u);
    EXPECT_GT(q.cell, 100.0 / 256.0);
}

}  // namespace
}  // namespace zsplat
