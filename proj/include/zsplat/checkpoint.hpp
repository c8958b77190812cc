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

#ifndef ZSPLAT_CHECKPOINT_HPP
#define ZSPLAT_CHECKPOINT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "zsplat/config.hpp"
#include "zsplat/errors.hpp"
#include "zsplat/gaussian_head.hpp"
#include "zsplat/io.hpp"
#include "zsplat/zformer.hpp"

namespace zsplat {

/// Parameters of the whole model: one ZFormerParams per block plus the shared head.
struct Checkpoint {
    std::vector<ZFormerParams<float>> blocks;
    HeadParams<float> head;

    bool operator==(const Checkpoint&) const = default;
};

/// Block b uses SplitMix64(seed) draw b as its seed; the head uses the draw after the last block.
inline Checkpoint init_checkpoint(const RunConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SplitMix64 seeds(seed);
    Checkpoint ckpt;
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) ckpt.blocks.push_back(init_zformer<float>(cfg.attention, seeds.next()));
    ckpt.head = init_head<float>(cfg.attention.model_width, cfg.head_hidden, seeds.next());
    return ckpt;
}

namespace detail {

template <class Fn>
void for_each_layer(Checkpoint& c, Fn&& fn) {
    for (std::size_t b = 0; b < c.blocks.size(); ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        auto& p = c.blocks[b];
        fn(prefix + "w_q", p.w_q);
        fn(prefix + "w_k", p.w_k);
        fn(prefix + "w_v", p.w_v);
        fn(prefix + "w_o", p.w_o);
        fn(prefix + "gate", p.gate);
        fn(prefix + "pool_proj", p.pool_proj);
    }
    fn(std::string("head.layer1"), c.head.layer1);
    fn(std::string("head.layer2"), c.head.layer2);
}

}  // namespace detail

/// Writes one tensor container per weight and bias into `dir`, plus
/// manifest.json mapping parameter names to files. Returns the manifest path.
inline std::filesystem::path write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt,
                                              const RunConfig& cfg) {
    std::filesystem::create_directories(dir);
    nlohmann::json tensors = nlohmann::json::object();
    Checkpoint copy = ckpt;
    detail::for_each_layer(copy, [&](const std::string& name, LinearLayer<float>& layer) {
        const std::string wfile = name + ".weight.tns", bfile = name + ".bias.tns";
        write_tensor(dir / wfile, TensorFile{{layer.weight.rows, layer.weight.cols}, layer.weight.data});
        write_tensor(dir / bfile, TensorFile{{layer.bias.size()}, layer.bias});
        tensors[name + ".weight"] = wfile;
        tensors[name + ".bias"] = bfile;
    });
    nlohmann::json manifest{{"format", "zsplat-checkpoint"},
                            {"version", 1},
                            {"model_width", cfg.attention.model_width},
                            {"head_width", cfg.attention.head_width},
                            {"head_hidden", cfg.head_hidden},
                            {"num_blocks", cfg.num_blocks},
                            {"seed", cfg.seed},
                            {"tensors", tensors}};
    const auto path = dir / "manifest.json";
    detail::write_file(path, manifest.dump(2) + "\n");
    return path;
}

/// Loads a checkpoint and checks every tensor against the shapes `cfg` implies.
/// Shape or name mismatches raise CheckpointError; unreadable files FormatError.
inline Checkpoint read_checkpoint(const std::filesystem::path& manifest_path, const RunConfig& cfg) {
    const std::string text = detail::read_file(manifest_path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("malformed checkpoint manifest: " + std::string(e.what()), e.byte);
    }
    if (!manifest.is_object() || manifest.value("format", "") != "zsplat-checkpoint" ||
        !manifest.contains("tensors") || !manifest["tensors"].is_object())
        throw FormatError("not a zsplat checkpoint manifest", 0);
    const auto dir = manifest_path.parent_path();
    // Shapes come from a freshly initialized model of the requested configuration.
    Checkpoint ckpt = init_checkpoint(cfg, 0);
    const auto& tensors = manifest["tensors"];
    std::size_t expected_names = 0;
    detail::for_each_layer(ckpt, [&](const std::string& name, LinearLayer<float>& layer) {
        expected_names += 2;
        for (const char* part : {".weight", ".bias"}) {
            const std::string key = name + part;
            if (!tensors.contains(key)) throw CheckpointError("checkpoint lacks tensor '" + key + "'");
            const auto t = read_tensor(dir / tensors[key].get<std::string>());
            const bool weight = std::string(part) == ".weight";
            const std::vector<std::size_t> want =
                weight ? std::vector<std::size_t>{layer.weight.rows, layer.weight.cols}
                       : std::vector<std::size_t>{layer.bias.size()};
            if (t.shape != want) {
                std::string got, exp;
                for (auto s : t.shape) got += std::to_string(s) + " ";
                for (auto s : want) exp += std::to_string(s) + " ";
                throw CheckpointError("tensor '" + key + "' has shape [ " + got + "], configuration expects [ " +
                                      exp + "]");
            }
            auto values = t.to_f32();
            if (weight) layer.weight.data = std::move(values);
            else layer.bias = std::move(values);
        }
    });
    if (tensors.size() != expected_names)
        throw CheckpointError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, configuration expects " +
                              std::to_string(expected_names));
    return ckpt;
}

}  // namespace zsplat

#endif  // ZSPLAT_CHECKPOINT_HPP
