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

#ifndef ZSPLAT_GRADCHECK_HPP
#define ZSPLAT_GRADCHECK_HPP

// Finite-difference checks of every hand-written backward pass. Each check
// uses the scalar loss L = sum(out * R) for a fixed random R, so the upstream
// gradient is R, and compares the analytic gradient of one parameter group
// against central differences in double precision.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "zsplat/gaussian_head.hpp"
#include "zsplat/numerics.hpp"
#include "zsplat/zformer.hpp"

namespace zsplat {

struct GradReport {
    std::string group;
    double max_rel_error = 0.0;
};

namespace detail {

inline Tensor2<double> random_tensor(std::size_t rows, std::size_t cols, SplitMix64& rng, double scale = 1.0) {
    Tensor2<double> t(rows, cols);
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

inline double weighted_sum(const Tensor2<double>& out, const Tensor2<double>& weights) {
    double total = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) total += out.data[i] * weights.data[i];
    return total;
}

/// A named slice of parameters: read the current values, write new ones,
/// and fetch the matching analytic gradient.
struct ParamGroup {
    std::string name;
    std::function<std::vector<double>()> get;
    std::function<void(std::span<const double>)> set;
};

inline std::vector<double> flatten(const LinearLayer<double>& l) {
    std::vector<double> v(l.weight.data);
    v.insert(v.end(), l.bias.begin(), l.bias.end());
    return v;
}

inline std::vector<double> flatten(const LinearGrad<double>& g) {
    std::vector<double> v(g.weight.data);
    v.insert(v.end(), g.bias.begin(), g.bias.end());
    return v;
}

inline void assign(LinearLayer<double>& l, std::span<const double> x) {
    std::copy_n(x.begin(), l.weight.data.size(), l.weight.data.begin());
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(l.weight.data.size()), x.end(), l.bias.begin());
}

inline ParamGroup layer_group(std::string name, LinearLayer<double>& layer) {
    return {std::move(name), [&layer] { return flatten(layer); },
            [&layer](std::span<const double> x) { assign(layer, x); }};
}

inline ParamGroup tensor_group(std::string name, Tensor2<double>& t) {
    return {std::move(name), [&t] { return t.data; },
            [&t](std::span<const double> x) { std::copy(x.begin(), x.end(), t.data.begin()); }};
}

/// grad_check of `loss` over one group, with `analytic` evaluated at the base point.
inline double check_group(const ParamGroup& group, const std::function<double()>& loss,
                          const std::vector<double>& analytic, double step) {
    const std::vector<double> base = group.get();
    auto f = [&](std::span<const double> x) {
        group.set(x);
        const double v = loss();
        group.set(base);
        return v;
    };
    auto g = [&](std::span<const double>) { return analytic; };
    return grad_check(f, g, base, step);
}

inline std::vector<std::size_t> ragged_offsets(std::size_t n, SplitMix64& rng) {
    std::vector<std::size_t> offsets{0};
    while (offsets.back() < n) offsets.push_back(std::min(n, offsets.back() + 1 + rng.next() % 4));
    return offsets;
}

}  // namespace detail

/// Gradient check of the full block feature path (selection frozen) for every
/// learned layer and the input features.
inline std::vector<GradReport> zformer_gradient_report(const AttentionConfig& cfg, std::size_t n, std::uint64_t seed,
                                                       double step = 1e-5) {
    SplitMix64 rng(seed);
    auto p = init_zformer<double>(cfg, rng.next());
    for (auto* layer : {&p.w_q, &p.w_k, &p.w_v, &p.w_o, &p.gate, &p.pool_proj})
        for (auto& b : layer->bias) b = rng.uniform(-0.5, 0.5);
    auto features = detail::random_tensor(n, cfg.model_width, rng);
    const auto offsets = detail::ragged_offsets(n, rng);
    BlockCache<double> cache;
    const auto out = block_features(features, offsets, p, cfg, nullptr, &cache);
    const auto upstream = detail::random_tensor(out.rows, out.cols, rng);
    const auto grads = block_features_backward(cache, p, cfg, upstream);
    const BlockSelection frozen = cache.selection;
    auto loss = [&] { return detail::weighted_sum(block_features(features, offsets, p, cfg, &frozen), upstream); };

    std::vector<GradReport> report;
    auto run = [&](detail::ParamGroup g, std::vector<double> analytic) {
        report.push_back({g.name, detail::check_group(g, loss, analytic, step)});
    };
    run(detail::layer_group("w_q", p.w_q), detail::flatten(grads.w_q));
    run(detail::layer_group("w_k", p.w_k), detail::flatten(grads.w_k));
    run(detail::layer_group("w_v", p.w_v), detail::flatten(grads.w_v));
    run(detail::layer_group("w_o", p.w_o), detail::flatten(grads.w_o));
    run(detail::layer_group("gate", p.gate), detail::flatten(grads.gate));
    run(detail::layer_group("pool_proj", p.pool_proj), detail::flatten(grads.pool_proj));
    run(detail::tensor_group("input", features), grads.input.data);
    return report;
}

/// Gradient check of group_attention alone.
inline std::vector<GradReport> group_attention_gradient_report(const AttentionConfig& cfg, std::size_t n,
                                                               std::uint64_t seed, double step = 1e-5) {
    SplitMix64 rng(seed);
    auto p = init_zformer<double>(cfg, rng.next());
    auto features = detail::random_tensor(n, cfg.model_width, rng);
    const auto upstream = detail::random_tensor(n, cfg.model_width, rng);
    const auto grads = group_attention_backward(features, p, cfg, upstream);
    auto loss = [&] { return detail::weighted_sum(group_attention(features, p, cfg).out, upstream); };
    std::vector<GradReport> report;
    auto run = [&](detail::ParamGroup g, std::vector<double> analytic) {
        report.push_back({"group_attention." + g.name, detail::check_group(g, loss, analytic, step)});
    };
    run(detail::layer_group("w_q", p.w_q), detail::flatten(grads.w_q));
    run(detail::layer_group("w_k", p.w_k), detail::flatten(grads.w_k));
    run(detail::layer_group("w_v", p.w_v), detail::flatten(grads.w_v));
    run(detail::layer_group("w_o", p.w_o), detail::flatten(grads.w_o));
    run(detail::tensor_group("input", features), grads.input.data);
    return report;
}

/// Gradient check of topk_attention alone with the selection frozen at the base point.
inline std::vector<GradReport> topk_attention_gradient_report(const AttentionConfig& cfg, std::size_t n,
                                                              std::uint64_t seed, double step = 1e-5) {
    SplitMix64 rng(seed);
    auto p = init_zformer<double>(cfg, rng.next());
    auto features = detail::random_tensor(n, cfg.model_width, rng);
    const auto upstream = detail::random_tensor(n, cfg.model_width, rng);
    const auto weights = group_attention(features, p, cfg).block_weights;
    const auto selection = select_blocks(weights, cfg.resolved_k(weights.rows));
    const auto grads = topk_attention_backward(features, selection, p, cfg, upstream);
    auto loss = [&] {
        const auto proj = project_qkv(features, p);
        return detail::weighted_sum(project_rows(p.w_o, selection_heads(proj, selection, cfg.block_len)), upstream);
    };
    std::vector<GradReport> report;
    auto run = [&](detail::ParamGroup g, std::vector<double> analytic) {
        report.push_back({"topk_attention." + g.name, detail::check_group(g, loss, analytic, step)});
    };
    run(detail::layer_group("w_q", p.w_q), detail::flatten(grads.w_q));
    run(detail::layer_group("w_k", p.w_k), detail::flatten(grads.w_k));
    run(detail::layer_group("w_v", p.w_v), detail::flatten(grads.w_v));
    run(detail::layer_group("w_o", p.w_o), detail::flatten(grads.w_o));
    run(detail::tensor_group("input", features), grads.input.data);
    return report;
}

/// Gradient check of gated_fuse: gate layer, features, and both attention inputs.
inline std::vector<GradReport> gated_fuse_gradient_report(const AttentionConfig& cfg, std::size_t n,
                                                          std::uint64_t seed, double step = 1e-5) {
    SplitMix64 rng(seed);
    auto p = init_zformer<double>(cfg, rng.next());
    for (auto& b : p.gate.bias) b = rng.uniform(-1.0, 1.0);
    auto features = detail::random_tensor(n, cfg.model_width, rng);
    auto grp = detail::random_tensor(n, cfg.model_width, rng);
    auto sel = detail::random_tensor(n, cfg.model_width, rng);
    const auto upstream = detail::random_tensor(n, cfg.model_width, rng);
    const auto grads = gated_fuse_backward(features, grp, sel, p, upstream);
    auto loss = [&] { return detail::weighted_sum(gated_fuse(features, grp, sel, p), upstream); };
    std::vector<GradReport> report;
    auto run = [&](detail::ParamGroup g, std::vector<double> analytic) {
        report.push_back({"gated_fuse." + g.name, detail::check_group(g, loss, analytic, step)});
    };
    run(detail::layer_group("gate", p.gate), detail::flatten(grads.gate));
    run(detail::tensor_group("input", features), grads.features.data);
    run(detail::tensor_group("attn_grp", grp), grads.attn_grp.data);
    run(detail::tensor_group("attn_sel", sel), grads.attn_sel.data);
    return report;
}

/// Gradient check of the Gaussian head: both layers and the features. Colors are
/// float inputs and cannot be probed at h = 1e-5, so they are not checked here.
inline std::vector<GradReport> head_gradient_report(std::size_t n, std::size_t width, std::size_t hidden,
                                                    std::uint64_t seed, double step = 1e-5) {
    SplitMix64 rng(seed);
    auto p = init_head<double>(width, hidden, rng.next());
    for (auto& b : p.layer1.bias) b = rng.uniform(-0.5, 0.5);
    for (auto& b : p.layer2.bias) b = rng.uniform(-0.5, 0.5);
    auto features = detail::random_tensor(n, width, rng);
    std::vector<Vec3f> positions(n), colors(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) {
            positions[i][a] = static_cast<float>(rng.uniform(-1.0, 1.0));
            colors[i][a] = static_cast<float>(rng.uniform(0.1, 0.9));
        }
    const double offset_scale = 0.3;
    auto evaluate = [&](HeadCache<double>* cache) {
        return head_outputs(positions, features, colors, p, offset_scale, cache);
    };
    HeadCache<double> cache;
    const auto out = evaluate(&cache);
    const auto upstream = detail::random_tensor(out.rows, out.cols, rng);
    const auto grads = head_backward(cache, p, offset_scale, upstream);
    auto loss = [&] { return detail::weighted_sum(evaluate(nullptr), upstream); };
    std::vector<GradReport> report;
    auto run = [&](detail::ParamGroup g, std::vector<double> analytic) {
        report.push_back({"head." + g.name, detail::check_group(g, loss, analytic, step)});
    };
    run(detail::layer_group("layer1", p.layer1), detail::flatten(grads.layer1));
    run(detail::layer_group("layer2", p.layer2), detail::flatten(grads.layer2));
    run(detail::tensor_group("features", features), grads.features.data);
    return report;
}

}  // namespace zsplat

#endif  // ZSPLAT_GRADCHECK_HPP
