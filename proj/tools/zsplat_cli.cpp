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

// zsplat command-line tool. Exit codes: 0 success, 1 verification failure,
// 2 input or format error, 3 range error, 4 checkpoint mismatch.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zsplat/verify.hpp"
#include "zsplat/zsplat.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kVerifyFailed = 1, kInput = 2, kRange = 3, kCheckpoint = 4 };

std::vector<zsplat::Vec3f> to_points(const zsplat::Tensor2<float>& m, const std::string& what) {
    if (m.rows == 0) throw zsplat::InputError("empty point set");
    if (m.cols != 3) throw zsplat::InputError(what + " must have 3 columns, got " + std::to_string(m.cols));
    std::vector<zsplat::Vec3f> pts(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) pts[i] = {m(i, 0), m(i, 1), m(i, 2)};
    return pts;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw zsplat::InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct SerializeArgs {
    std::string points, out, perm;
    int depth = zsplat::kDefaultSerializeDepth;
};

int cmd_serialize(const SerializeArgs& a) {
    if (a.depth < 1 || a.depth > zsplat::kMaxDepth)
        throw zsplat::RangeError("depth " + std::to_string(a.depth) + " outside [1, " +
                                 std::to_string(zsplat::kMaxDepth) + "]; 3 * depth must fit in 64 bits");
    const std::string bytes = zsplat::detail::read_file(a.points);
    if (bytes.empty()) throw zsplat::InputError("empty point set");
    const auto pts = to_points(zsplat::decode_tensor(bytes).to_matrix(), "point tensor");
    const auto q = zsplat::fit_quantizer(pts, a.depth);
    const auto codes = zsplat::compute_codes(pts, q);
    const auto order = zsplat::code_order(codes);
    std::vector<std::uint64_t> sorted(order.size()), perm(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        sorted[i] = codes[order[i]].value;
        perm[i] = order[i];
    }
    zsplat::write_tensor(a.out, zsplat::TensorFile{{sorted.size()}, sorted});
    fs::path perm_path = a.perm;
    if (perm_path.empty()) {
        perm_path = fs::path(a.out);
        perm_path.replace_extension(".perm.tns");
    }
    zsplat::write_tensor(perm_path, zsplat::TensorFile{{perm.size()}, perm});
    std::cout << "points " << sorted.size() << "\ncode_min " << sorted.front() << "\ncode_max " << sorted.back()
              << "\ncodes " << a.out << "\npermutation " << perm_path.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct ForwardArgs {
    std::string scene, config, checkpoint, out_l1, out_l2;
};

int cmd_forward(const ForwardArgs& a) {
    zsplat::RunConfig cfg;
    if (!a.config.empty()) cfg = zsplat::RunConfig::load(a.config);
    auto pick = [](const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; };
    const std::string scene = pick(a.scene, cfg.scene), ckpt_path = pick(a.checkpoint, cfg.checkpoint);
    const std::string out_l1 = pick(a.out_l1, cfg.out_l1), out_l2 = pick(a.out_l2, cfg.out_l2);
    if (scene.empty()) throw zsplat::InputError("no scene directory given (--scene or config \"scene\")");
    if (out_l1.empty() || out_l2.empty()) throw zsplat::InputError("both --out-l1 and --out-l2 are required");
    cfg.validate();

    const auto t0 = std::chrono::steady_clock::now();
    const auto views = zsplat::read_scene(scene);
    const auto ckpt = ckpt_path.empty() ? zsplat::init_checkpoint(cfg, cfg.seed) : zsplat::read_checkpoint(ckpt_path, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    const auto result = zsplat::run_forward(views, cfg, ckpt);
    const auto t2 = std::chrono::steady_clock::now();
    zsplat::write_gaussians_ply(result.levels.front().gaussians, out_l1);
    zsplat::write_gaussians_ply(result.levels.back().gaussians, out_l2);
    const auto t3 = std::chrono::steady_clock::now();

    auto ms = [](auto d) { return std::chrono::duration<double, std::milli>(d).count(); };
    std::cout << "N " << result.input_points << "\nM_L1 " << result.levels.front().gaussians.size() << "\nM_L2 "
              << result.levels.back().gaussians.size() << "\nload_ms " << ms(t1 - t0) << "\nforward_ms "
              << ms(t2 - t1) << "\nwrite_ms " << ms(t3 - t2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct SelectArgs {
    std::string views, out;
    std::size_t max_views = 0;
    double delta = 0.0;
    std::size_t min_gain = 0;
};

/// view_<i>/points.tns when present, otherwise the unprojected depth map.
std::vector<std::vector<zsplat::Vec3f>> read_point_maps(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw zsplat::InputError("views directory " + dir.string() + " does not exist");
    std::vector<std::vector<zsplat::Vec3f>> maps;
    for (std::size_t i = 0;; ++i) {
        const std::string name = "view_" + std::to_string(i);
        const auto vdir = dir / name;
        if (!fs::is_directory(vdir)) break;
        if (fs::exists(vdir / "points.tns")) {
            const auto m = zsplat::read_matrix(vdir / "points.tns");
            maps.push_back(m.rows == 0 ? std::vector<zsplat::Vec3f>{} : to_points(m, name + "/points.tns"));
            continue;
        }
        if (!fs::exists(vdir / "depth.tns")) throw zsplat::InputError(name + ": missing points.tns or depth.tns");
        if (!fs::exists(vdir / "camera.json")) throw zsplat::InputError(name + ": missing camera.json");
        const auto depth = zsplat::read_tensor(vdir / "depth.tns");
        if (depth.shape.size() != 2) throw zsplat::InputError(name + ": depth.tns must be H x W");
        const zsplat::DepthMap dm{depth.shape[1], depth.shape[0], depth.to_f32()};
        maps.push_back(zsplat::unproject(dm, zsplat::read_camera(vdir / "camera.json")));
    }
    if (maps.empty()) throw zsplat::InputError("views directory " + dir.string() + " holds no view_0");
    return maps;
}

int cmd_select_views(const SelectArgs& a) {
    if (a.max_views < 1) throw zsplat::InputError("--max must be at least 1");
    const auto maps = read_point_maps(a.views);
    std::vector<zsplat::Vec3f> all;
    for (const auto& m : maps) all.insert(all.end(), m.begin(), m.end());
    if (all.empty()) throw zsplat::InputError("empty point set");

    zsplat::Quantizer q;
    if (a.delta > 0.0) {
        auto [lo, hi] = zsplat::detail::bounding_box(all);
        const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
        const double cells = std::floor(extent / a.delta) + 2.0;
        const int depth = std::max(1, static_cast<int>(std::ceil(std::log2(cells))));
        if (depth > zsplat::kMaxDepth)
            throw zsplat::RangeError("--delta " + std::to_string(a.delta) + " needs more than " +
                                     std::to_string(zsplat::kMaxDepth) + " bits per axis");
        q = zsplat::aligned_quantizer(all, a.delta, depth);
    } else {
        q = zsplat::fit_quantizer(all, 8);
    }
    const auto candidates = zsplat::build_candidates(maps, q);
    const auto r = zsplat::select_views(candidates, a.max_views, a.min_gain);
    nlohmann::json j{{"selected", r.selected}, {"covered", r.covered}, {"gains", r.marginal_gains}};
    if (a.out.empty()) {
        std::cout << j.dump() << '\n';
    } else {
        write_json(a.out, j);
        std::cout << j.dump() << '\n';
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct InitArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
};

int cmd_init_checkpoint(const InitArgs& a) {
    zsplat::RunConfig cfg;
    if (!a.config.empty()) cfg = zsplat::RunConfig::load(a.config);
    if (a.seed) cfg.seed = *a.seed;
    const auto manifest = zsplat::write_checkpoint(a.out, zsplat::init_checkpoint(cfg, cfg.seed), cfg);
    std::cout << "manifest " << manifest.string() << "\nseed " << cfg.seed << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct SceneArgs {
    std::string config, out;
    std::size_t resolution = 32;
};

int cmd_generate_scene(const SceneArgs& a) {
    zsplat::SyntheticScene scene;
    if (a.config.empty()) {
        scene = zsplat::SyntheticScene::two_view_plane(a.resolution);
    } else {
        const std::string text = zsplat::detail::read_file(a.config);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw zsplat::FormatError(std::string("malformed scene config: ") + e.what(), e.byte);
        }
        scene = zsplat::SyntheticScene::from_json(j);
    }
    const auto views = scene.render();
    zsplat::write_scene(a.out, views);
    std::cout << "views " << views.size() << "\nresolution " << scene.width << "x" << scene.height << "\nspacing "
              << scene.plane_spacing() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

int cmd_verify(const std::string& suite) {
    const auto results = zsplat::verify::run_suite(suite);
    std::size_t failed = 0;
    std::printf("%-10s %-38s %-6s %s\n", "suite", "check", "result", "detail");
    for (const auto& r : results) {
        std::printf("%-10s %-38s %-6s %s\n", r.suite.c_str(), r.name.c_str(), r.passed ? "PASS" : "FAIL",
                    r.detail.c_str());
        if (!r.passed) ++failed;
    }
    std::printf("%zu checks, %zu failed\n", results.size(), failed);
    return failed == 0 ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zsplat: Z-order serialization, sparse attention, pooling, and Gaussian heads"};
    app.require_subcommand(1);
    std::optional<int> threads;
    app.add_option("--threads", threads, "Worker threads (overrides ZSPLAT_THREADS)");

    SerializeArgs ser;
    auto* s = app.add_subcommand("serialize", "Sort points by Morton code");
    s->add_option("--points", ser.points, "N x 3 point tensor")->required();
    s->add_option("--depth", ser.depth, "Bits per axis");
    s->add_option("--out", ser.out, "Sorted codes tensor")->required();
    s->add_option("--out-perm", ser.perm, "Permutation tensor (default <out>.perm.tns)");

    ForwardArgs fwd;
    auto* f = app.add_subcommand("forward", "Predict two levels of Gaussians for a scene");
    f->add_option("--scene", fwd.scene, "Scene directory");
    f->add_option("--config", fwd.config, "Run config JSON");
    f->add_option("--checkpoint", fwd.checkpoint, "Checkpoint manifest (default: seeded init)");
    f->add_option("--out-l1", fwd.out_l1, "PLY for the first level");
    f->add_option("--out-l2", fwd.out_l2, "PLY for the last level");

    SelectArgs sel;
    auto* v = app.add_subcommand("select-views", "Greedy maximum-coverage view selection");
    v->add_option("--views", sel.views, "Directory of view_<i> point maps")->required();
    v->add_option("--max", sel.max_views, "Maximum number of views")->required();
    v->add_option("--delta", sel.delta, "Cell size (default: extent / 256)");
    v->add_option("--min-gain", sel.min_gain, "Accept a view only if it adds more than this many cells");
    v->add_option("--out", sel.out, "Result JSON");

    InitArgs ini;
    auto* c = app.add_subcommand("init-checkpoint", "Write seeded model parameters");
    c->add_option("--config", ini.config, "Run config JSON");
    c->add_option("--seed", ini.seed, "Seed (default: config seed)");
    c->add_option("--out", ini.out, "Output directory")->required();

    SceneArgs scn;
    auto* g = app.add_subcommand("generate-scene", "Render an analytic scene");
    g->add_option("--config", scn.config, "Scene JSON (default: two-view plane)");
    g->add_option("--resolution", scn.resolution, "Pixels per side for the default scene");
    g->add_option("--out", scn.out, "Output directory")->required();

    std::string suite = "all";
    auto* ver = app.add_subcommand("verify", "Run property suites");
    ver->add_option("--suite", suite, "all|morton|attention|pool|greedy|grad");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInput;
    }

    try {
        if (threads) zsplat::set_num_threads(*threads);
        if (*s) return cmd_serialize(ser);
        if (*f) return cmd_forward(fwd);
        if (*v) return cmd_select_views(sel);
        if (*c) return cmd_init_checkpoint(ini);
        if (*g) return cmd_generate_scene(scn);
        if (*ver) return cmd_verify(suite);
    } catch (const zsplat::RangeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRange;
    } catch (const zsplat::CheckpointError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCheckpoint;
    } catch (const zsplat::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    }
    return kInput;
}
