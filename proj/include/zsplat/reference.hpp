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

#ifndef ZSPLAT_REFERENCE_HPP
#define ZSPLAT_REFERENCE_HPP

// Deliberately naive reimplementations used as oracles by the verification
// suites and tests. Nothing here is on the production path.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "zsplat/morton.hpp"
#include "zsplat/numerics.hpp"
#include "zsplat/view_select.hpp"
#include "zsplat/zformer.hpp"

namespace zsplat::reference {

/// Literal bit-by-bit interleave: bit i of x, y, z at 3i, 3i+1, 3i+2.
inline std::uint64_t encode_loop(std::uint64_t x, std::uint64_t y, std::uint64_t z, int depth) {
    std::uint64_t code = 0;
    for (int i = 0; i < depth; ++i) {
        code += ((x >> i) & 1u) << (3 * i);
        code += ((y >> i) & 1u) << (3 * i + 1);
        code += ((z >> i) & 1u) << (3 * i + 2);
    }
    return code;
}

/// x W^T + b with plain loops, in double.
template <class T>
Tensor2<double> linear(const LinearLayer<T>& layer, const Tensor2<T>& x) {
    Tensor2<double> y(x.rows, layer.out_features());
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t o = 0; o < layer.out_features(); ++o) {
            double acc = static_cast<double>(layer.bias[o]);
            for (std::size_t i = 0; i < x.cols; ++i)
                acc += static_cast<double>(x(r, i)) * static_cast<double>(layer.weight(o, i));
            y(r, o) = acc;
        }
    return y;
}

/// softmax(q k^T / sqrt(d)) v over explicit row lists.
inline std::vector<double> attend(std::span<const double> q, const Tensor2<double>& k, const Tensor2<double>& v,
                                  std::span<const std::size_t> rows) {
    const std::size_t dh = k.cols;
    std::vector<double> w(rows.size());
    double peak = -INFINITY;
    for (std::size_t a = 0; a < rows.size(); ++a) {
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += q[d] * k(rows[a], d);
        w[a] = s / std::sqrt(static_cast<double>(dh));
        peak = std::max(peak, w[a]);
    }
    double total = 0.0;
    for (auto& x : w) total += (x = std::exp(x - peak));
    std::vector<double> out(v.cols, 0.0);
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t d = 0; d < v.cols; ++d) out[d] += w[a] / total * v(rows[a], d);
    return out;
}

/// Full dense attention over all n tokens followed by w_o. Materializes the
/// n x n score matrix on purpose.
template <class T>
Tensor2<double> dense_attention(const Tensor2<T>& features, const ZFormerParams<T>& p) {
    const auto q = linear(p.w_q, features), k = linear(p.w_k, features), v = linear(p.w_v, features);
    const std::size_t n = features.rows, dh = q.cols;
    Tensor2<double> scores(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < dh; ++d) s += q(i, d) * k(j, d);
            scores(i, j) = s / std::sqrt(static_cast<double>(dh));
        }
    for (std::size_t i = 0; i < n; ++i) softmax_inplace(scores.row(i));
    Tensor2<double> heads = matmul(scores, v);
    return linear(p.w_o.template cast<double>(), heads);
}

/// Group attention recomputed from scratch: average rows per block, attend
/// among block means, copy the block result to every member token, apply w_o.
template <class T>
Tensor2<double> group_attention(const Tensor2<T>& features, const ZFormerParams<T>& p, std::size_t block_len,
                                Tensor2<double>* weights_out = nullptr) {
    const auto q = linear(p.w_q, features), k = linear(p.w_k, features), v = linear(p.w_v, features);
    const std::size_t n = features.rows, dh = q.cols, blocks = (n + block_len - 1) / block_len;
    auto mean = [&](const Tensor2<double>& x) {
        Tensor2<double> out(blocks, dh);
        for (std::size_t b = 0; b < blocks; ++b) {
            std::size_t count = 0;
            for (std::size_t t = b * block_len; t < n && t < (b + 1) * block_len; ++t, ++count)
                for (std::size_t d = 0; d < dh; ++d) out(b, d) += x(t, d);
            for (std::size_t d = 0; d < dh; ++d) out(b, d) /= static_cast<double>(count);
        }
        return out;
    };
    const auto qh = mean(q), kh = mean(k), vh = mean(v);
    Tensor2<double> heads(n, dh), weights(blocks, blocks);
    std::vector<std::size_t> all(blocks);
    for (std::size_t b = 0; b < blocks; ++b) all[b] = b;
    for (std::size_t b = 0; b < blocks; ++b) {
        const auto o = attend(qh.row(b), kh, vh, all);
        for (std::size_t j = 0; j < blocks; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < dh; ++d) s += qh(b, d) * kh(j, d);
            weights(b, j) = s / std::sqrt(static_cast<double>(dh));
        }
        softmax_inplace(weights.row(b));
        for (std::size_t t = b * block_len; t < n && t < (b + 1) * block_len; ++t)
            for (std::size_t d = 0; d < dh; ++d) heads(t, d) = o[d];
    }
    if (weights_out) *weights_out = weights;
    return linear(p.w_o.template cast<double>(), heads);
}

/// For each token, gather the rows of its query block's selected key blocks
/// into an explicit list and run dense attention over that list.
template <class T>
Tensor2<double> gathered_attention(const Tensor2<T>& features, const ZFormerParams<T>& p, std::size_t block_len,
                                   const BlockSelection& selection) {
    const auto q = linear(p.w_q, features), k = linear(p.w_k, features), v = linear(p.w_v, features);
    const std::size_t n = features.rows;
    Tensor2<double> heads(n, q.cols);
    for (std::size_t t = 0; t < n; ++t) {
        std::vector<std::size_t> rows;
        for (auto kb : selection[t / block_len])
            for (std::size_t j = kb * block_len; j < n && j < (kb + 1) * block_len; ++j) rows.push_back(j);
        const auto o = attend(q.row(t), k, v, rows);
        std::copy(o.begin(), o.end(), heads.row(t).begin());
    }
    return linear(p.w_o.template cast<double>(), heads);
}

/// Top-k choice by full sort: own block first, then others by (weight desc, index asc).
template <class T>
BlockSelection select_by_sorting(const Tensor2<T>& weights, std::size_t k) {
    BlockSelection out(weights.rows);
    for (std::size_t i = 0; i < weights.rows; ++i) {
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t j = 0; j < weights.cols; ++j)
            if (j != i) ranked.push_back({-static_cast<double>(weights(i, j)), j});
        std::sort(ranked.begin(), ranked.end());
        out[i].push_back(static_cast<std::uint32_t>(i));
        for (std::size_t a = 0; a + 1 < k; ++a) out[i].push_back(static_cast<std::uint32_t>(ranked[a].second));
        std::sort(out[i].begin(), out[i].end());
    }
    return out;
}

/// Elementwise gate fusion.
template <class T>
Tensor2<double> gated_fuse(const Tensor2<T>& features, const Tensor2<T>& grp, const Tensor2<T>& sel,
                           const ZFormerParams<T>& p) {
    const auto logits = linear(p.gate, features);
    Tensor2<double> out(grp.rows, grp.cols);
    for (std::size_t t = 0; t < grp.rows; ++t) {
        const double g1 = 1.0 / (1.0 + std::exp(-logits(t, 0)));
        const double g2 = 1.0 / (1.0 + std::exp(-logits(t, 1)));
        for (std::size_t c = 0; c < grp.cols; ++c) out(t, c) = g1 * grp(t, c) + g2 * sel(t, c);
    }
    return out;
}

/// Brute-force clustering: bucket each point by its coarse cell
/// (x >> h, y >> h, z >> h). Returns the member index sets, ordered.
inline std::set<std::vector<std::size_t>> bucket_by_coarse_cell(std::span<const Vec3f> points, const Quantizer& q,
                                                               int levels) {
    std::map<std::array<std::uint32_t, 3>, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto c = quantize(q, points[i]);
        buckets[{c[0] >> levels, c[1] >> levels, c[2] >> levels}].push_back(i);
    }
    std::set<std::vector<std::size_t>> out;
    for (auto& [cell, members] : buckets) out.insert(members);
    return out;
}

inline std::size_t union_size(std::span<const ViewCandidate> candidates, std::span<const std::size_t> chosen) {
    std::set<std::uint64_t> cells;
    for (auto v : chosen)
        for (const auto& c : candidates)
            if (c.index == v) cells.insert(c.coverage_keys.begin(), c.coverage_keys.end());
    return cells.size();
}

/// Best coverage achievable with at most `max_views` views, by enumeration.
inline std::size_t optimal_coverage(std::span<const ViewCandidate> candidates, std::size_t max_views) {
    const std::size_t n = candidates.size();
    std::size_t best = 0;
    for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) > max_views) continue;
        std::set<std::uint64_t> cells;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1u) cells.insert(candidates[i].coverage_keys.begin(), candidates[i].coverage_keys.end());
        best = std::max(best, cells.size());
    }
    return best;
}

}  // namespace zsplat::reference

#endif  // ZSPLAT_REFERENCE_HPP
