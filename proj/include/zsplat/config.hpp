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

#ifndef ZSPLAT_CONFIG_HPP
#define ZSPLAT_CONFIG_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include "json.hpp"
#include "zsplat/errors.hpp"
#include "zsplat/gaussian_head.hpp"
#include "zsplat/zformer.hpp"

namespace zsplat {

/// Everything a forward run needs besides the scene data. Serialized as a flat
/// JSON object; unknown keys are rejected and every key is optional.
///
///   block_len        32           tokens per attention block
///   select_k         "half"       key blocks per query block, or an integer
///   model_width      96           feature width
///   head_width       32           attention head width
///   pool_levels      2            coordinate levels dropped by each pooling
///   serialize_depth  16           bits per axis of the serialization grid
///   pooled_position  "cell_center" or "member_mean"
///   num_blocks       2            stacked blocks (one output level each)
///   cell_size        "bbox"       world size of a grid cell; "bbox" (or 0) fits the
///                                 bounding box, "pixel" uses the median pixel footprint
///   head_hidden      128          hidden width of the Gaussian head
///   seed             0            checkpoint seed when no checkpoint is given
///   scene, checkpoint, out_l1, out_l2   default paths for the CLI
struct RunConfig {
    AttentionConfig attention;
    std::size_t num_blocks = 2;
    double cell_size = 0.0;    // > 0: fixed cell size
    bool pixel_cells = false;  // cell_size "pixel"
    std::size_t head_hidden = kDefaultHeadHidden;
    std::uint64_t seed = 0;
    std::string scene, checkpoint, out_l1, out_l2;

    void validate() const {
        attention.validate();
        if (num_blocks < 1) throw ConfigError("num_blocks must be >= 1");
        if (!(cell_size >= 0.0) || !std::isfinite(cell_size)) throw ConfigError("cell_size must be >= 0");
        if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
        if (static_cast<std::size_t>(attention.pool_levels) * num_blocks >
            static_cast<std::size_t>(attention.serialize_depth))
            throw ConfigError("pool_levels * num_blocks exceeds serialize_depth");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["block_len"] = attention.block_len;
        if (attention.select_k) j["select_k"] = *attention.select_k;
        else j["select_k"] = "half";
        j["model_width"] = attention.model_width;
        j["head_width"] = attention.head_width;
        j["pool_levels"] = attention.pool_levels;
        j["serialize_depth"] = attention.serialize_depth;
        j["pooled_position"] =
            attention.pooled_position == PooledPosition::cell_center ? "cell_center" : "member_mean";
        j["num_blocks"] = num_blocks;
        if (pixel_cells) j["cell_size"] = "pixel";
        else if (cell_size > 0.0) j["cell_size"] = cell_size;
        else j["cell_size"] = "bbox";
        j["head_hidden"] = head_hidden;
        j["seed"] = seed;
        j["scene"] = scene;
        j["checkpoint"] = checkpoint;
        j["out_l1"] = out_l1;
        j["out_l2"] = out_l2;
        return j;
    }

    static RunConfig from_json(const nlohmann::json& j) {
        static const std::set<std::string> known{"block_len",  "select_k",    "model_width", "head_width",
                                                 "pool_levels", "serialize_depth", "pooled_position",
                                                 "num_blocks", "cell_size",   "head_hidden", "seed",
                                                 "scene",      "checkpoint",  "out_l1",      "out_l2"};
        if (!j.is_object()) throw ConfigError("run config must be a JSON object");
        for (const auto& [key, value] : j.items())
            if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
        RunConfig c;
        try {
            if (j.contains("block_len")) c.attention.block_len = j["block_len"].get<std::size_t>();
            if (j.contains("select_k")) {
                const auto& k = j["select_k"];
                if (k.is_string()) {
                    if (k.get<std::string>() != "half") throw ConfigError("select_k must be an integer or \"half\"");
                } else {
                    c.attention.select_k = k.get<std::size_t>();
                }
            }
            if (j.contains("model_width")) c.attention.model_width = j["model_width"].get<std::size_t>();
            if (j.contains("head_width")) c.attention.head_width = j["head_width"].get<std::size_t>();
            if (j.contains("pool_levels")) c.attention.pool_levels = j["pool_levels"].get<int>();
            if (j.contains("serialize_depth")) c.attention.serialize_depth = j["serialize_depth"].get<int>();
            if (j.contains("pooled_position")) {
                const auto mode = j["pooled_position"].get<std::string>();
                if (mode == "cell_center") c.attention.pooled_position = PooledPosition::cell_center;
                else if (mode == "member_mean") c.attention.pooled_position = PooledPosition::member_mean;
                else throw ConfigError("pooled_position must be \"cell_center\" or \"member_mean\"");
            }
            if (j.contains("num_blocks")) c.num_blocks = j["num_blocks"].get<std::size_t>();
            if (j.contains("cell_size")) {
                const auto& cs = j["cell_size"];
                if (cs.is_string()) {
                    const auto mode = cs.get<std::string>();
                    if (mode == "pixel") c.pixel_cells = true;
                    else if (mode != "bbox") throw ConfigError("cell_size must be a number, \"bbox\" or \"pixel\"");
                } else {
                    c.cell_size = cs.get<double>();
                }
            }
            if (j.contains("head_hidden")) c.head_hidden = j["head_hidden"].get<std::size_t>();
            if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
            if (j.contains("scene")) c.scene = j["scene"].get<std::string>();
            if (j.contains("checkpoint")) c.checkpoint = j["checkpoint"].get<std::string>();
            if (j.contains("out_l1")) c.out_l1 = j["out_l1"].get<std::string>();
            if (j.contains("out_l2")) c.out_l2 = j["out_l2"].get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("invalid run config: ") + e.what());
        }
        c.validate();
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open config " + path.string());
        const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        try {
            return from_json(nlohmann::json::parse(text));
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError("malformed config JSON in " + path.string() + ": " + e.what(), e.byte);
        }
    }
};

}  // namespace zsplat

#endif  // ZSPLAT_CONFIG_HPP
