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

#ifndef ZSPLAT_VERIFY_HPP
#define ZSPLAT_VERIFY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "zsplat/errors.hpp"
#include "zsplat/gradcheck.hpp"
#include "zsplat/morton.hpp"
#include "zsplat/reference.hpp"
#include "zsplat/view_select.hpp"
#include "zsplat/zformer.hpp"

namespace zsplat::verify {

struct CheckResult {
    std::string suite;
    std::string name;
    bool passed = false;
    std::string detail;
};

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"morton", "attention", "pool", "greedy", "grad"};
    return names;
}

// ---------------------------------------------------------------------------
// Building blocks shared with the tests.
// ---------------------------------------------------------------------------

/// Counts decode(encode(x, y, z)) mismatches over the full cube of side 2^depth.
inline std::size_t roundtrip_failures(int depth) {
    const std::uint32_t side = 1u << depth;
    std::size_t failures = 0;
    for (std::uint32_t x = 0; x < side; ++x)
        for (std::uint32_t y = 0; y < side; ++y)
            for (std::uint32_t z = 0; z < side; ++z) {
                const auto c = decode(encode(x, y, z, depth));
                if (c[0] != x || c[1] != y || c[2] != z) ++failures;
            }
    return failures;
}

/// Counts violations of shift(encode(x, y, z), h) == encode(x >> h, y >> h, z >> h).
inline std::size_t nesting_failures(int depth, int levels) {
    const std::uint32_t side = 1u << depth;
    std::size_t failures = 0;
    for (std::uint32_t x = 0; x < side; ++x)
        for (std::uint32_t y = 0; y < side; ++y)
            for (std::uint32_t z = 0; z < side; ++z)
                if (shift(encode(x, y, z, depth), levels) != encode(x >> levels, y >> levels, z >> levels, depth - levels))
                    ++failures;
    return failures;
}

inline Tensor2<float> random_features(std::size_t n, std::size_t width, SplitMix64& rng) {
    Tensor2<float> f(n, width);
    for (auto& v : f.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return f;
}

template <class T>
double max_abs_diff(const Tensor2<T>& a, const Tensor2<double>& b) {
    if (a.rows != b.rows || a.cols != b.cols) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return worst;
}

struct EquivalenceReport {
    double group_l1 = 0.0;  // group_attention with L = 1 vs dense
    double topk_all = 0.0;  // topk_attention with k = B vs dense
};

/// Both degenerate settings of the sparse attention against dense attention, in float.
inline EquivalenceReport attention_equivalence(std::size_t n, std::size_t width, std::size_t head, std::size_t block_len,
                                               std::uint64_t seed) {
    SplitMix64 rng(seed);
    AttentionConfig cfg;
    cfg.model_width = width;
    cfg.head_width = head;
    cfg.block_len = block_len;
    const auto p = init_zformer<float>(cfg, rng.next());
    const auto f = random_features(n, width, rng);
    const auto dense = reference::dense_attention(f, p);
    EquivalenceReport r;

    AttentionConfig token = cfg;
    token.block_len = 1;
    r.group_l1 = max_abs_diff(group_attention(f, p, token).out, dense);

    AttentionConfig all = cfg;
    all.select_k = cfg.block_count(n);
    const auto weights = group_attention(f, p, all).block_weights;
    r.topk_all = max_abs_diff(topk_attention(f, weights, p, all), dense);
    return r;
}

/// True when zorder_pool's clusters are exactly the coarse-cell buckets, the
/// cluster sizes add up to n, and the output codes strictly increase.
inline bool pool_partition_matches(std::size_t n, std::uint64_t seed, int depth, int levels, std::string* why = nullptr) {
    SplitMix64 rng(seed);
    PointRepresentation rep;
    rep.positions.resize(n);
    rep.colors.resize(n);
    rep.view_of.assign(n, 0);
    rep.features = Tensor2<float>(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        // Mix of uniform points and tight clumps so clusters of many sizes occur.
        const double spread = (i % 3 == 0) ? 0.01 : 1.0;
        for (int a = 0; a < 3; ++a) rep.positions[i][a] = static_cast<float>(rng.uniform(0.0, spread));
        rep.colors[i] = {0.5f, 0.5f, 0.5f};
    }
    const auto q = fit_quantizer(rep.positions, depth);
    const auto sorted = sort_by_code(rep, q);
    const auto pooled = pool_geometry(sorted.rep, sorted.codes, levels, q, PooledPosition::cell_center);
    auto fail = [&](const std::string& m) {
        if (why) *why = m;
        return false;
    };
    if (pooled.offsets.front() != 0 || pooled.offsets.back() != n) return fail("cluster sizes do not sum to n");
    for (std::size_t c = 1; c < pooled.codes.size(); ++c)
        if (!(pooled.codes[c - 1] < pooled.codes[c])) return fail("pooled codes not strictly increasing");
    std::set<std::vector<std::size_t>> clusters;
    for (std::size_t c = 0; c + 1 < pooled.offsets.size(); ++c) {
        std::vector<std::size_t> members(sorted.permutation.begin() + static_cast<std::ptrdiff_t>(pooled.offsets[c]),
                                         sorted.permutation.begin() + static_cast<std::ptrdiff_t>(pooled.offsets[c + 1]));
        std::sort(members.begin(), members.end());
        clusters.insert(std::move(members));
    }
    if (clusters != reference::bucket_by_coarse_cell(rep.positions, q, levels))
        return fail("clusters differ from coarse-cell buckets");
    return true;
}

/// Random coverage instance: up to max_views sets over a universe of up to max_universe cells.
inline std::vector<ViewCandidate> random_instance(SplitMix64& rng, std::size_t max_views, std::size_t max_universe) {
    const std::size_t views = 1 + rng.next() % max_views;
    const std::size_t universe = 1 + rng.next() % max_universe;
    std::vector<ViewCandidate> out(views);
    for (std::size_t v = 0; v < views; ++v) {
        out[v].index = v;
        const double density = rng.uniform(0.0, 0.5);
        for (std::uint64_t e = 0; e < universe; ++e)
            if (rng.uniform() < density) out[v].coverage_keys.push_back(e);
    }
    return out;
}

/// Why the heap greedy disagrees with the oracle on `c`, or empty when it agrees
/// and the result is internally consistent.
inline std::string greedy_mismatch(std::span<const ViewCandidate> c, std::size_t max_views) {
    const auto fast = select_views(c, max_views);
    const auto slow = naive_greedy(c, max_views);
    if (!(fast == slow)) return "heap result differs from naive greedy";
    for (std::size_t i = 1; i < fast.marginal_gains.size(); ++i)
        if (fast.marginal_gains[i] > fast.marginal_gains[i - 1]) return "marginal gains increase";
    if (fast.covered != reference::union_size(c, fast.selected)) return "covered differs from union size";
    return {};
}

// ---------------------------------------------------------------------------
// Suites.
// ---------------------------------------------------------------------------

namespace detail {

inline CheckResult check(const std::string& suite, const std::string& name, bool ok, const std::string& detail) {
    return {suite, name, ok, detail};
}

inline std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << std::scientific << v;
    return s.str();
}

inline std::vector<CheckResult> morton_suite() {
    std::vector<CheckResult> out;
    std::size_t rt = 0, nest = 0;
    for (int d = 1; d <= 5; ++d) {
        rt += roundtrip_failures(d);
        for (int h = 1; h <= 3 && h <= d; ++h) nest += nesting_failures(d, h);
    }
    out.push_back(check("morton", "roundtrip d<=5", rt == 0, std::to_string(rt) + " failures"));
    out.push_back(check("morton", "nesting d<=5 h<=3", nest == 0, std::to_string(nest) + " failures"));
    SplitMix64 rng(7);
    std::size_t loop = 0;
    for (int i = 0; i < 100000; ++i) {
        const int d = 1 + static_cast<int>(rng.next() % kMaxDepth);
        const std::uint64_t mask = (1ull << d) - 1;
        const auto x = rng.next() & mask, y = rng.next() & mask, z = rng.next() & mask;
        if (encode(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(z), d).value !=
            reference::encode_loop(x, y, z, d))
            ++loop;
    }
    out.push_back(check("morton", "encode vs bit loop, d<=21", loop == 0, std::to_string(loop) + " mismatches"));
    bool range_error = false;
    try {
        encode(0, 0, 0, kMaxDepth + 1);
    } catch (const RangeError&) {
        range_error = true;
    }
    out.push_back(check("morton", "depth 22 rejected", range_error, range_error ? "RangeError" : "accepted"));
    return out;
}

inline std::vector<CheckResult> attention_suite() {
    std::vector<CheckResult> out;
    double worst_group = 0.0, worst_topk = 0.0;
    for (std::size_t n : {7u, 32u, 257u}) {
        const auto r = attention_equivalence(n, 16, 8, 8, 100 + n);
        worst_group = std::max(worst_group, r.group_l1);
        worst_topk = std::max(worst_topk, r.topk_all);
    }
    out.push_back(check("attention", "group L=1 vs dense", worst_group <= 1e-5, "max abs " + fmt(worst_group)));
    out.push_back(check("attention", "topk k=B vs dense", worst_topk <= 1e-5, "max abs " + fmt(worst_topk)));

    SplitMix64 rng(11);
    AttentionConfig cfg;
    cfg.model_width = 16;
    cfg.head_width = 8;
    cfg.block_len = 5;
    const auto p = init_zformer<float>(cfg, rng.next());
    const auto f = random_features(103, 16, rng);
    Tensor2<double> ref_weights;
    const auto grp = group_attention(f, p, cfg);
    const auto grp_ref = reference::group_attention(f, p, cfg.block_len, &ref_weights);
    const double gd = max_abs_diff(grp.out, grp_ref);
    out.push_back(check("attention", "group attention vs oracle", gd <= 1e-5, "max abs " + fmt(gd)));
    const std::size_t blocks = cfg.block_count(103);
    const std::size_t k = cfg.resolved_k(blocks);
    const auto sel = select_blocks(grp.block_weights, k);
    const bool same_sel = sel == reference::select_by_sorting(grp.block_weights, k);
    out.push_back(check("attention", "top-k selection vs sort", same_sel, "k=" + std::to_string(k)));
    const double td = max_abs_diff(topk_attention(f, grp.block_weights, p, cfg),
                                   reference::gathered_attention(f, p, cfg.block_len, sel));
    out.push_back(check("attention", "top-k attention vs gather", td <= 1e-5, "max abs " + fmt(td)));
    return out;
}

inline std::vector<CheckResult> pool_suite() {
    std::vector<CheckResult> out;
    std::size_t failures = 0;
    std::string why;
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        if (!pool_partition_matches(10000, seed, 10, 2, &why)) ++failures;
    out.push_back(check("pool", "partition vs bucketing (10 seeds)", failures == 0,
                        failures == 0 ? "exact" : why));
    return out;
}

inline std::vector<CheckResult> greedy_suite() {
    std::vector<CheckResult> out;
    SplitMix64 rng(5);
    std::size_t mismatches = 0;
    std::string why;
    for (int i = 0; i < 1000; ++i) {
        const auto c = random_instance(rng, 20, 100);
        const auto m = greedy_mismatch(c, 1 + rng.next() % 20);
        if (!m.empty()) ++mismatches, why = m;
    }
    out.push_back(check("greedy", "heap == naive (1000 instances)", mismatches == 0,
                        mismatches == 0 ? "identical" : why));
    double worst_ratio = 1.0;
    for (int i = 0; i < 200; ++i) {
        const auto c = random_instance(rng, 12, 60);
        const std::size_t m = 1 + rng.next() % 4;
        const auto opt = reference::optimal_coverage(c, m);
        if (opt == 0) continue;
        worst_ratio = std::min(worst_ratio, static_cast<double>(select_views(c, m).covered) / static_cast<double>(opt));
    }
    out.push_back(check("greedy", "(1-1/e) bound", worst_ratio >= 1.0 - std::exp(-1.0),
                        "worst ratio " + std::to_string(worst_ratio)));
    const std::vector<ViewCandidate> hand{{0, {0, 1, 2}}, {1, {1, 2}}, {2, {3}}};
    const auto r = select_views(hand, 2);
    const bool ok = r.selected == std::vector<std::size_t>{0, 2} && r.covered == 4 &&
                    r.marginal_gains == std::vector<std::size_t>{3, 1};
    out.push_back(check("greedy", "hand instance", ok, "covered " + std::to_string(r.covered)));
    return out;
}

inline std::vector<CheckResult> grad_suite() {
    std::vector<CheckResult> out;
    AttentionConfig cfg;
    cfg.model_width = 8;
    cfg.head_width = 4;
    cfg.block_len = 4;
    auto add = [&](const std::string& prefix, const std::vector<GradReport>& reports) {
        for (const auto& r : reports)
            out.push_back(check("grad", prefix.empty() ? r.group : prefix + "." + r.group, r.max_rel_error < 1e-4, "rel " + fmt(r.max_rel_error)));
    };
    add("zformer", zformer_gradient_report(cfg, 32, 1));
    add("", head_gradient_report(32, 8, 16, 2));
    return out;
}

}  // namespace detail

/// Runs one suite ("all" runs every suite). Throws InputError naming the valid
/// suites when `name` is unknown.
inline std::vector<CheckResult> run_suite(const std::string& name) {
    if (name == "all") {
        std::vector<CheckResult> out;
        for (const auto& s : suite_names()) {
            auto part = run_suite(s);
            out.insert(out.end(), part.begin(), part.end());
        }
        return out;
    }
    if (name == "morton") return detail::morton_suite();
    if (name == "attention") return detail::attention_suite();
    if (name == "pool") return detail::pool_suite();
    if (name == "greedy") return detail::greedy_suite();
    if (name == "grad") return detail::grad_suite();
    std::string valid = "all";
    for (const auto& s : suite_names()) valid += "|" + s;
    throw InputError("unknown suite '" + name + "'; valid suites: " + valid);
}

}  // namespace zsplat::verify

#endif  // ZSPLAT_VERIFY_HPP
