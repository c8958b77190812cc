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

#ifndef ZSPLAT_ZFORMER_HPP
#define ZSPLAT_ZFORMER_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <iterator>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zsplat/errors.hpp"
#include "zsplat/morton.hpp"
#include "zsplat/numerics.hpp"
#include "zsplat/parallel.hpp"
#include "zsplat/point_representation.hpp"

namespace zsplat {

enum class PooledPosition { cell_center, member_mean };

struct AttentionConfig {
    std::size_t block_len = 32;
    std::optional<std::size_t> select_k;  // nullopt: half of the block count, rounded up
    std::size_t model_width = kDefaultFeatureWidth;
    std::size_t head_width = 32;
    int pool_levels = 2;
    int serialize_depth = kDefaultSerializeDepth;
    PooledPosition pooled_position = PooledPosition::cell_center;

    std::size_t block_count(std::size_t n) const { return (n + block_len - 1) / block_len; }

    std::size_t resolved_k(std::size_t blocks) const {
        const std::size_t k = select_k ? *select_k : std::max<std::size_t>(1, (blocks + 1) / 2);
        if (k < 1 || k > blocks)
            throw ConfigError("select_k = " + std::to_string(k) + " outside [1, " + std::to_string(blocks) + "]");
        return k;
    }

    void validate() const {
        if (block_len < 1) throw ConfigError("block_len must be >= 1");
        if (head_width < 1) throw ConfigError("head_width must be >= 1");
        if (model_width < 1) throw ConfigError("model_width must be >= 1");
        if (pool_levels < 0) throw ConfigError("pool_levels must be >= 0");
        if (serialize_depth < 1 || serialize_depth > kMaxDepth)
            throw ConfigError("serialize_depth must lie in [1, " + std::to_string(kMaxDepth) + "]");
        if (select_k && *select_k < 1) throw ConfigError("select_k must be >= 1");
    }
};

template <class T>
struct ZFormerParams {
    LinearLayer<T> w_q, w_k, w_v;  // model_width -> head_width
    LinearLayer<T> w_o;            // head_width -> model_width
    LinearLayer<T> gate;           // model_width -> 2
    LinearLayer<T> pool_proj;      // model_width -> model_width

    template <class U>
    ZFormerParams<U> cast() const {
        return {w_q.template cast<U>(), w_k.template cast<U>(),  w_v.template cast<U>(),
                w_o.template cast<U>(), gate.template cast<U>(), pool_proj.template cast<U>()};
    }

    void validate(const AttentionConfig& cfg) const {
        auto check = [](const LinearLayer<T>& l, std::size_t in, std::size_t out, const char* name) {
            if (l.in_features() != in || l.out_features() != out || l.bias.size() != out)
                throw ConfigError(std::string(name) + " has shape " + l.weight.shape_string() + ", expected " +
                                  std::to_string(out) + "x" + std::to_string(in));
        };
        check(w_q, cfg.model_width, cfg.head_width, "w_q");
        check(w_k, cfg.model_width, cfg.head_width, "w_k");
        check(w_v, cfg.model_width, cfg.head_width, "w_v");
        check(w_o, cfg.head_width, cfg.model_width, "w_o");
        check(gate, cfg.model_width, 2, "gate");
        check(pool_proj, cfg.model_width, cfg.model_width, "pool_proj");
    }

    bool operator==(const ZFormerParams&) const = default;
};

/// Layer seeds are successive SplitMix64(seed) draws in the order
/// w_q, w_k, w_v, w_o, gate, pool_proj.
template <class T = float>
ZFormerParams<T> init_zformer(const AttentionConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SplitMix64 seeds(seed);
    const std::size_t w = cfg.model_width, h = cfg.head_width;
    ZFormerParams<T> p;
    p.w_q = init_linear<T>(w, h, seeds.next());
    p.w_k = init_linear<T>(w, h, seeds.next());
    p.w_v = init_linear<T>(w, h, seeds.next());
    p.w_o = init_linear<T>(h, w, seeds.next());
    p.gate = init_linear<T>(w, 2, seeds.next());
    p.pool_proj = init_linear<T>(w, w, seeds.next());
    return p;
}

// ---------------------------------------------------------------------------
// Block averaging and the per-block key selection.
// ---------------------------------------------------------------------------

/// Mean of each run of `block_len` consecutive rows; the last block may be short.
template <class T>
Tensor2<T> block_pool(const Tensor2<T>& x, std::size_t block_len) {
    if (block_len < 1) throw ConfigError("block_len must be >= 1");
    const std::size_t blocks = (x.rows + block_len - 1) / block_len;
    Tensor2<T> out(blocks, x.cols);
    std::vector<double> acc(x.cols);
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t r0 = b * block_len, r1 = std::min(x.rows, r0 + block_len);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = 0; c < x.cols; ++c) acc[c] += static_cast<double>(x(r, c));
        for (std::size_t c = 0; c < x.cols; ++c) out(b, c) = static_cast<T>(acc[c] / static_cast<double>(r1 - r0));
    }
    return out;
}

/// Selected key blocks of every query block, ascending.
using BlockSelection = std::vector<std::vector<std::uint32_t>>;

/// Query block i keeps its own block plus the k - 1 other blocks with the
/// largest weights in row i; ties go to the lower block index.
template <class T>
BlockSelection select_blocks(const Tensor2<T>& block_weights, std::size_t k) {
    const std::size_t blocks = block_weights.rows;
    if (k < 1 || k > blocks)
        throw ConfigError("select_k = " + std::to_string(k) + " outside [1, " + std::to_string(blocks) + "]");
    BlockSelection selection(blocks);
    std::vector<std::uint32_t> others;
    for (std::size_t i = 0; i < blocks; ++i) {
        others.clear();
        for (std::size_t j = 0; j < blocks; ++j)
            if (j != i) others.push_back(static_cast<std::uint32_t>(j));
        auto row = block_weights.row(i);
        std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k - 1), others.end(),
                          [&](std::uint32_t a, std::uint32_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
        auto& chosen = selection[i];
        chosen.assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k - 1));
        chosen.push_back(static_cast<std::uint32_t>(i));
        std::sort(chosen.begin(), chosen.end());
    }
    return selection;
}

// ---------------------------------------------------------------------------
// Attention internals (single head of width head_width).
// ---------------------------------------------------------------------------

template <class T>
struct Projections {
    Tensor2<T> q, k, v;  // n x head_width
};

template <class T>
Projections<T> project_qkv(const Tensor2<T>& features, const ZFormerParams<T>& p) {
    return {linear_forward(p.w_q, features), linear_forward(p.w_k, features), linear_forward(p.w_v, features)};
}

template <class T>
struct GroupCache {
    Tensor2<T> q_hat, k_hat, v_hat;  // B x head_width
    Tensor2<T> weights;              // B x B softmax weights
    Tensor2<T> block_out;            // B x head_width, before w_o
};

template <class T>
GroupCache<T> group_heads(const Projections<T>& proj, std::size_t block_len) {
    GroupCache<T> g;
    g.q_hat = block_pool(proj.q, block_len);
    g.k_hat = block_pool(proj.k, block_len);
    g.v_hat = block_pool(proj.v, block_len);
    const std::size_t blocks = g.q_hat.rows, dh = g.q_hat.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    g.weights = Tensor2<T>(blocks, blocks);
    parallel_for(blocks, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t i = b0; i < b1; ++i) {
            for (std::size_t j = 0; j < blocks; ++j) {
                double acc = 0.0;
                for (std::size_t d = 0; d < dh; ++d)
                    acc += static_cast<double>(g.q_hat(i, d)) * static_cast<double>(g.k_hat(j, d));
                g.weights(i, j) = static_cast<T>(acc * scale);
            }
            softmax_inplace(g.weights.row(i));
        }
    });
    g.block_out = matmul(g.weights, g.v_hat);
    return g;
}

/// Every token of block b receives row b of `block_rows`.
template <class T>
Tensor2<T> broadcast_blocks(const Tensor2<T>& block_rows, std::size_t n, std::size_t block_len) {
    Tensor2<T> out(n, block_rows.cols);
    for (std::size_t t = 0; t < n; ++t) {
        auto src = block_rows.row(t / block_len);
        std::copy(src.begin(), src.end(), out.row(t).begin());
    }
    return out;
}

namespace detail {

// Eight doubles; GCC and Clang lower this to whatever SIMD width the target has.
using Vec8d = double __attribute__((vector_size(64)));
using Vec8u = std::uint64_t __attribute__((vector_size(64)));

inline Vec8d load8(const double* p) {
    Vec8d v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store8(double* p, Vec8d v) { std::memcpy(p, &v, sizeof v); }

/// Replaces x by exp(x - shift) for a multiple of 8 values with x <= shift and
/// returns their sum (8 lanes, then lanes in order). Cody-Waite reduction
/// y = k ln2 + r with |r| <= ln2 / 2, then a degree-12 Taylor polynomial;
/// relative error below 2e-16. Arguments under -700, including -inf, give 0.
inline double exp_shifted_sum(double* x, std::size_t n, double shift) {
    constexpr double log2e = 1.4426950408889634074;
    constexpr double ln2_hi = 6.93147180369123816490e-01, ln2_lo = 1.90821492927058770002e-10;
    constexpr double round_shift = 0x1.8p52;  // adding it rounds to an integer in the low mantissa bits
    constexpr double coeff[] = {1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
                                1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,     1.0 / 120.0,
                                1.0 / 24.0,        1.0 / 6.0,        0.5,             1.0,
                                1.0};
    const Vec8u shift_bits = Vec8u{} + std::bit_cast<std::uint64_t>(round_shift);
    Vec8d total{};
    for (std::size_t i = 0; i < n; i += 8) {
        const Vec8d y = load8(x + i) - shift;
        const auto underflow = y < -700.0;
        const Vec8d v = underflow ? Vec8d{} - 700.0 : y;
        const Vec8d shifted = v * log2e + round_shift;
        const Vec8d kd = shifted - round_shift;
        const Vec8d r = (v - kd * ln2_hi) - kd * ln2_lo;
        Vec8d poly = Vec8d{} + coeff[0];
        for (std::size_t c = 1; c < std::size(coeff); ++c) poly = poly * r + coeff[c];
        const Vec8u bits = ((std::bit_cast<Vec8u>(shifted) - shift_bits) + 1023) << 52;
        const Vec8d e = underflow ? Vec8d{} : poly * std::bit_cast<Vec8d>(bits);
        store8(x + i, e);
        total += e;
    }
    double sum = 0.0;
    for (int l = 0; l < 8; ++l) sum += total[l];
    return sum;
}

/// Maximum of a multiple of 8 values.
inline double max8(const double* x, std::size_t n) {
    Vec8d best = Vec8d{} - INFINITY;
    for (std::size_t i = 0; i < n; i += 8) {
        const Vec8d v = load8(x + i);
        best = v > best ? v : best;
    }
    double m = best[0];
    for (int l = 1; l < 8; ++l) m = std::max(m, best[l]);
    return m;
}

/// Register tile of the selection kernel: 8 queries against 16 keys (scores)
/// or 16 head columns (values). Buffers are padded with zeros to whole tiles.
inline constexpr std::size_t kTileRows = 8, kTileCols = 16;

inline std::size_t round_up(std::size_t v, std::size_t to) { return (v + to - 1) / to * to; }

/// scores[r][c] = sum_d queries[r][d] * keys_t[d][c]; keys_t has row stride `stride`.
inline void score_tile(const double* queries, std::size_t dh, const double* keys_t, std::size_t stride, double* scores,
                       std::size_t cols) {
    Vec8d acc[kTileRows][2] = {};
    for (std::size_t d = 0; d < dh; ++d) {
        const Vec8d k0 = load8(keys_t + d * stride), k1 = load8(keys_t + d * stride + 8);
        for (std::size_t r = 0; r < kTileRows; ++r) {
            const double q = queries[r * dh + d];
            acc[r][0] += q * k0;
            acc[r][1] += q * k1;
        }
    }
    for (std::size_t r = 0; r < kTileRows; ++r) {
        store8(scores + r * cols, acc[r][0]);
        store8(scores + r * cols + 8, acc[r][1]);
    }
}

/// One run of consecutive keys: score columns [col, col + len) are tokens [token, token + len).
struct KeySegment {
    std::size_t col, token, len;
};

/// out[r][c] = sum over segments of weights[r][col] * values[token][c]; values has row stride dh.
inline void value_tile(const double* weights, std::size_t cols, std::span<const KeySegment> segments,
                       const double* values, std::size_t dh, double* out) {
    Vec8d acc[kTileRows][2] = {};
    for (const auto& seg : segments)
        for (std::size_t c = 0; c < seg.len; ++c) {
            const double* v = values + (seg.token + c) * dh;
            const Vec8d v0 = load8(v), v1 = load8(v + 8);
            for (std::size_t r = 0; r < kTileRows; ++r) {
                const double w = weights[r * cols + seg.col + c];
                acc[r][0] += w * v0;
                acc[r][1] += w * v1;
            }
        }
    for (std::size_t r = 0; r < kTileRows; ++r) {
        store8(out + r * dh, acc[r][0]);
        store8(out + r * dh + 8, acc[r][1]);
    }
}

}  // namespace detail

/// Per-token attention against the raw keys/values of the selected blocks.
/// Returns n x head_width (before w_o). Keys and values are staged once in
/// 64-bit, padded per block; each query block then needs O(block_len * k *
/// block_len) scratch. No n x n buffer exists.
template <class T>
Tensor2<T> selection_heads(const Projections<T>& proj, const BlockSelection& selection, std::size_t block_len) {
    using detail::kTileCols;
    using detail::kTileRows;
    const std::size_t n = proj.q.rows, dh = proj.q.cols;
    const std::size_t blocks = (n + block_len - 1) / block_len;
    if (selection.size() != blocks)
        throw DimensionError("selection covers " + std::to_string(selection.size()) + " blocks, expected " +
                             std::to_string(blocks));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t dp = detail::round_up(dh, kTileCols), lp = detail::round_up(block_len, kTileCols);
    auto block_size = [&](std::size_t b) { return std::min(n, (b + 1) * block_len) - b * block_len; };

    // keys_t: per block a dp x lp transposed slab; values: n x dp.
    std::vector<double> keys_t(blocks * dp * lp, 0.0), values(n * dp, 0.0);
    parallel_for(blocks, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            double* slab = &keys_t[b * dp * lp];
            for (std::size_t c = 0; c < block_size(b); ++c) {
                const std::size_t t = b * block_len + c;
                for (std::size_t d = 0; d < dh; ++d) {
                    slab[d * lp + c] = static_cast<double>(proj.k(t, d));
                    values[t * dp + d] = static_cast<double>(proj.v(t, d));
                }
            }
        }
    });

    Tensor2<T> out(n, dh);
    parallel_for(blocks, [&](std::size_t b0, std::size_t b1) {
        std::vector<double> queries, scores, acc;
        std::vector<detail::KeySegment> segments;
        for (std::size_t qb = b0; qb < b1; ++qb) {
            const std::size_t q0 = qb * block_len, nq = block_size(qb);
            const std::size_t rows = detail::round_up(nq, kTileRows), cols = selection[qb].size() * lp;
            segments.clear();
            for (std::size_t i = 0; i < selection[qb].size(); ++i) {
                const std::size_t kb = selection[qb][i];
                segments.push_back({i * lp, kb * block_len, block_size(kb)});
            }
            queries.assign(rows * dp, 0.0);
            for (std::size_t t = 0; t < nq; ++t)
                for (std::size_t d = 0; d < dh; ++d) queries[t * dp + d] = static_cast<double>(proj.q(q0 + t, d)) * scale;
            scores.resize(rows * cols);
            acc.resize(rows * dp);
            for (std::size_t r0 = 0; r0 < rows; r0 += kTileRows)
                for (std::size_t i = 0; i < segments.size(); ++i) {
                    const double* slab = &keys_t[selection[qb][i] * dp * lp];
                    for (std::size_t c0 = 0; c0 < lp; c0 += kTileCols)
                        detail::score_tile(&queries[r0 * dp], dp, slab + c0, lp, &scores[r0 * cols + i * lp + c0],
                                           cols);
                }
            // Softmax over real keys; padding columns get weight zero.
            std::vector<double> totals(rows, 1.0);
            for (std::size_t t = 0; t < nq; ++t) {
                double* srow = &scores[t * cols];
                for (const auto& seg : segments)
                    std::fill(srow + seg.col + seg.len, srow + seg.col + lp, -INFINITY);
                totals[t] = detail::exp_shifted_sum(srow, cols, detail::max8(srow, cols));
            }
            for (std::size_t t = nq; t < rows; ++t) std::fill_n(&scores[t * cols], cols, 0.0);
            for (std::size_t r0 = 0; r0 < rows; r0 += kTileRows)
                for (std::size_t c0 = 0; c0 < dp; c0 += kTileCols)
                    detail::value_tile(&scores[r0 * cols], cols, segments, values.data() + c0, dp, &acc[r0 * dp + c0]);
            for (std::size_t t = 0; t < nq; ++t)
                for (std::size_t d = 0; d < dh; ++d) out(q0 + t, d) = static_cast<T>(acc[t * dp + d] / totals[t]);
        }
    });
    return out;
}

/// Output projection applied row-wise (parallel over rows, deterministic).
template <class T>
Tensor2<T> project_rows(const LinearLayer<T>& layer, const Tensor2<T>& x) {
    if (x.cols != layer.in_features())
        throw DimensionError("linear layer expects width " + std::to_string(layer.in_features()) + ", got " +
                             x.shape_string());
    Tensor2<T> y(x.rows, layer.out_features());
    parallel_for(
        x.rows,
        [&](std::size_t r0, std::size_t r1) {
            for (std::size_t r = r0; r < r1; ++r) linear_forward_row(layer, x.row(r), y.row(r));
        },
        256);
    return y;
}

// ---------------------------------------------------------------------------
// Public attention operations.
// ---------------------------------------------------------------------------

template <class T>
struct GroupAttentionResult {
    Tensor2<T> out;            // n x model_width
    Tensor2<T> block_weights;  // B x B
};

/// Attention among block-averaged queries, keys, and values; each token takes
/// its block's output, projected by w_o.
template <class T>
GroupAttentionResult<T> group_attention(const Tensor2<T>& features, const ZFormerParams<T>& p,
                                        const AttentionConfig& cfg) {
    if (features.rows == 0) throw InputError("group_attention needs at least one token");
    const auto proj = project_qkv(features, p);
    auto g = group_heads(proj, cfg.block_len);
    return {project_rows(p.w_o, broadcast_blocks(g.block_out, features.rows, cfg.block_len)),
            std::move(g.weights)};
}

/// Each query block attends to the raw tokens of its selected key blocks,
/// ranked by `block_weights` (see select_blocks); projected by w_o.
template <class T>
Tensor2<T> topk_attention(const Tensor2<T>& features, const Tensor2<T>& block_weights, const ZFormerParams<T>& p,
                          const AttentionConfig& cfg) {
    const std::size_t blocks = cfg.block_count(features.rows);
    if (block_weights.rows != blocks || block_weights.cols != blocks)
        throw DimensionError("block weights must be " + std::to_string(blocks) + "x" + std::to_string(blocks) +
                             ", got " + block_weights.shape_string());
    const auto selection = select_blocks(block_weights, cfg.resolved_k(blocks));
    const auto proj = project_qkv(features, p);
    return project_rows(p.w_o, selection_heads(proj, selection, cfg.block_len));
}

template <class T>
Tensor2<T> gate_values(const Tensor2<T>& features, const ZFormerParams<T>& p) {
    auto g = project_rows(p.gate, features);
    for (auto& v : g.data) v = static_cast<T>(sigmoid(static_cast<double>(v)));
    return g;
}

/// out = g1 * attn_grp + g2 * attn_sel with (g1, g2) = sigmoid(gate(features)) per token.
template <class T>
Tensor2<T> gated_fuse(const Tensor2<T>& features, const Tensor2<T>& attn_grp, const Tensor2<T>& attn_sel,
                      const ZFormerParams<T>& p) {
    if (attn_grp.rows != features.rows || attn_sel.rows != features.rows || attn_grp.cols != attn_sel.cols)
        throw DimensionError("gated_fuse shape mismatch: features " + features.shape_string() + ", grp " +
                             attn_grp.shape_string() + ", sel " + attn_sel.shape_string());
    const auto g = gate_values(features, p);
    Tensor2<T> out(attn_grp.rows, attn_grp.cols);
    for (std::size_t t = 0; t < out.rows; ++t) {
        const double g1 = g(t, 0), g2 = g(t, 1);
        for (std::size_t c = 0; c < out.cols; ++c)
            out(t, c) = static_cast<T>(g1 * static_cast<double>(attn_grp(t, c)) +
                                       g2 * static_cast<double>(attn_sel(t, c)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Z-order pooling.
// ---------------------------------------------------------------------------

/// Start offsets of the runs of equal shifted codes, plus a final sentinel.
inline std::vector<std::size_t> cluster_offsets(std::span<const ZCode> codes, int levels) {
    std::vector<std::size_t> offsets;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (i > 0 && codes[i].value < codes[i - 1].value) throw InputError("codes are not sorted ascending");
        if (i == 0 || shift(codes[i], levels) != shift(codes[i - 1], levels)) offsets.push_back(i);
    }
    offsets.push_back(codes.size());
    return offsets;
}

template <class T>
Tensor2<T> cluster_mean(const Tensor2<T>& x, std::span<const std::size_t> offsets) {
    const std::size_t clusters = offsets.size() - 1;
    Tensor2<T> out(clusters, x.cols);
    std::vector<double> acc(x.cols);
    for (std::size_t c = 0; c < clusters; ++c) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t r = offsets[c]; r < offsets[c + 1]; ++r)
            for (std::size_t k = 0; k < x.cols; ++k) acc[k] += static_cast<double>(x(r, k));
        const double count = static_cast<double>(offsets[c + 1] - offsets[c]);
        for (std::size_t k = 0; k < x.cols; ++k) out(c, k) = static_cast<T>(acc[k] / count);
    }
    return out;
}

struct PoolResult {
    PointRepresentation rep;
    std::vector<ZCode> codes;          // strictly increasing, depth reduced by the pooling levels
    std::vector<std::size_t> offsets;  // cluster c = input rows [offsets[c], offsets[c+1])
};

/// Cluster geometry of a sorted point sequence: runs of codes that agree after
/// dropping `levels` coordinate levels. Colors are member means, positions the
/// center of the coarse cell (or the member mean), the view that of the first
/// member. Features are left empty.
inline PoolResult pool_geometry(const PointRepresentation& sorted, std::span<const ZCode> codes, int levels,
                                const Quantizer& q, PooledPosition mode = PooledPosition::cell_center) {
    if (codes.size() != sorted.size())
        throw DimensionError("zorder_pool: " + std::to_string(codes.size()) + " codes for " +
                             std::to_string(sorted.size()) + " points");
    for (const auto& c : codes)
        if (c.depth != q.depth) throw InputError("code depth does not match the quantizer depth");
    const Quantizer coarse = q.coarsened(levels);
    PoolResult out;
    out.offsets = codes.empty() ? std::vector<std::size_t>{0} : cluster_offsets(codes, levels);
    const std::size_t clusters = out.offsets.size() - 1;
    out.rep.positions.resize(clusters);
    out.rep.colors.resize(clusters);
    out.rep.view_of.resize(clusters);
    out.codes.resize(clusters);
    for (std::size_t c = 0; c < clusters; ++c) {
        const std::size_t r0 = out.offsets[c], r1 = out.offsets[c + 1];
        const double count = static_cast<double>(r1 - r0);
        Vec3d color{}, position{};
        for (std::size_t r = r0; r < r1; ++r)
            for (int a = 0; a < 3; ++a) {
                color[a] += sorted.colors[r][a];
                position[a] += sorted.positions[r][a];
            }
        out.codes[c] = shift(codes[r0], levels);
        if (mode == PooledPosition::cell_center) position = coarse.cell_center(decode(out.codes[c]));
        else
            for (auto& v : position) v /= count;
        for (int a = 0; a < 3; ++a) {
            out.rep.colors[c][a] = static_cast<float>(std::clamp(color[a] / count, 0.0, 1.0));
            out.rep.positions[c][a] = static_cast<float>(position[a]);
        }
        out.rep.view_of[c] = sorted.view_of[r0];
    }
    return out;
}

/// Z-order pooling: pool_geometry plus features = pool_proj(member mean).
inline PoolResult zorder_pool(const PointRepresentation& sorted, std::span<const ZCode> codes, int levels,
                              const ZFormerParams<float>& p, const Quantizer& q,
                              PooledPosition mode = PooledPosition::cell_center) {
    auto out = pool_geometry(sorted, codes, levels, q, mode);
    out.rep.features = project_rows(p.pool_proj, cluster_mean(sorted.features, out.offsets));
    return out;
}

// ---------------------------------------------------------------------------
// Feature path of one block: projections -> group + selection attention ->
// gated fusion -> residual -> cluster mean -> pool_proj. Templated so that the
// same code runs in float for inference and in double for gradient checks.
// ---------------------------------------------------------------------------

template <class T>
struct BlockCache {
    Tensor2<T> input;
    Projections<T> proj;
    GroupCache<T> group;
    BlockSelection selection;
    Tensor2<T> group_tokens;  // n x head_width, block_out broadcast
    Tensor2<T> select_head;   // n x head_width
    Tensor2<T> attn_grp, attn_sel;
    Tensor2<T> gates;         // n x 2 after sigmoid
    Tensor2<T> residual;      // input + fused
    Tensor2<T> pooled_mean;
    std::vector<std::size_t> offsets;
};

/// Runs the feature path. `frozen` fixes the block selection (used when
/// differentiating); otherwise it is derived from the group weights.
template <class T>
Tensor2<T> block_features(const Tensor2<T>& features, std::span<const std::size_t> offsets,
                          const ZFormerParams<T>& p, const AttentionConfig& cfg,
                          const BlockSelection* frozen = nullptr, BlockCache<T>* cache = nullptr) {
    if (features.rows == 0) throw InputError("block_features needs at least one token");
    if (offsets.empty() || offsets.back() != features.rows || offsets.front() != 0)
        throw DimensionError("cluster offsets do not cover the token sequence");
    const std::size_t n = features.rows;
    auto proj = project_qkv(features, p);
    auto group = group_heads(proj, cfg.block_len);
    BlockSelection selection = frozen ? *frozen : select_blocks(group.weights, cfg.resolved_k(group.weights.rows));
    auto group_tokens = broadcast_blocks(group.block_out, n, cfg.block_len);
    auto select_head = selection_heads(proj, selection, cfg.block_len);
    auto attn_grp = project_rows(p.w_o, group_tokens);
    auto attn_sel = project_rows(p.w_o, select_head);
    auto gates = gate_values(features, p);
    Tensor2<T> residual(n, features.cols);
    for (std::size_t t = 0; t < n; ++t) {
        const double g1 = gates(t, 0), g2 = gates(t, 1);
        for (std::size_t c = 0; c < features.cols; ++c)
            residual(t, c) = static_cast<T>(static_cast<double>(features(t, c)) +
                                            static_cast<double>(static_cast<T>(
                                                g1 * static_cast<double>(attn_grp(t, c)) +
                                                g2 * static_cast<double>(attn_sel(t, c)))));
    }
    auto pooled_mean = cluster_mean(residual, offsets);
    auto out = project_rows(p.pool_proj, pooled_mean);
    if (cache) {
        *cache = BlockCache<T>{features,
                               std::move(proj),
                               std::move(group),
                               std::move(selection),
                               std::move(group_tokens),
                               std::move(select_head),
                               std::move(attn_grp),
                               std::move(attn_sel),
                               std::move(gates),
                               std::move(residual),
                               std::move(pooled_mean),
                               std::vector<std::size_t>(offsets.begin(), offsets.end())};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backward passes. The top-k index set is held at its forward value
// (straight-through); gradients flow through the group weights, Q, K_sel,
// V_sel, the gates, and every linear layer.
// ---------------------------------------------------------------------------

template <class T>
struct ZFormerGrads {
    LinearGrad<T> w_q, w_k, w_v, w_o, gate, pool_proj;
    Tensor2<T> input;

    ZFormerGrads(const ZFormerParams<T>& p, std::size_t n)
        : w_q(p.w_q), w_k(p.w_k), w_v(p.w_v), w_o(p.w_o), gate(p.gate), pool_proj(p.pool_proj),
          input(n, p.w_q.in_features()) {}
};

namespace detail {

template <class T>
void add_into(Tensor2<T>& dst, const Tensor2<T>& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

/// dQ, dK, dV of the group path given the gradient of block_out.
template <class T>
void group_heads_backward(const GroupCache<T>& g, const Tensor2<T>& d_block_out, std::size_t n,
                          std::size_t block_len, Tensor2<T>& dq, Tensor2<T>& dk, Tensor2<T>& dv) {
    const std::size_t blocks = g.weights.rows, dh = g.q_hat.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    // block_out = W V_hat
    Tensor2<T> d_weights = matmul(d_block_out, transpose(g.v_hat));
    Tensor2<T> d_vhat = matmul(transpose(g.weights), d_block_out);
    Tensor2<T> d_scores(blocks, blocks);
    for (std::size_t i = 0; i < blocks; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < blocks; ++j)
            dot += static_cast<double>(g.weights(i, j)) * static_cast<double>(d_weights(i, j));
        for (std::size_t j = 0; j < blocks; ++j)
            d_scores(i, j) = static_cast<T>(static_cast<double>(g.weights(i, j)) *
                                            (static_cast<double>(d_weights(i, j)) - dot) * scale);
    }
    Tensor2<T> d_qhat = matmul(d_scores, g.k_hat);
    Tensor2<T> d_khat = matmul(transpose(d_scores), g.q_hat);
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t b = t / block_len;
        const double inv = 1.0 / static_cast<double>(std::min(n, (b + 1) * block_len) - b * block_len);
        for (std::size_t d = 0; d < dh; ++d) {
            dq(t, d) += static_cast<T>(d_qhat(b, d) * inv);
            dk(t, d) += static_cast<T>(d_khat(b, d) * inv);
            dv(t, d) += static_cast<T>(d_vhat(b, d) * inv);
        }
    }
}

/// dQ, dK, dV of the selection path given the gradient of its head output.
template <class T>
void selection_heads_backward(const Projections<T>& proj, const BlockSelection& selection, std::size_t block_len,
                              const Tensor2<T>& d_head, Tensor2<T>& dq, Tensor2<T>& dk, Tensor2<T>& dv) {
    const std::size_t n = proj.q.rows, dh = proj.q.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<std::size_t> keys;
    std::vector<double> prob, dprob;
    for (std::size_t qb = 0; qb < selection.size(); ++qb) {
        keys.clear();
        for (auto kb : selection[qb])
            for (std::size_t j = kb * block_len; j < std::min(n, (kb + 1) * block_len); ++j) keys.push_back(j);
        prob.resize(keys.size());
        dprob.resize(keys.size());
        for (std::size_t t = qb * block_len; t < std::min(n, (qb + 1) * block_len); ++t) {
            for (std::size_t a = 0; a < keys.size(); ++a) {
                double s = 0.0;
                for (std::size_t d = 0; d < dh; ++d)
                    s += static_cast<double>(proj.q(t, d)) * static_cast<double>(proj.k(keys[a], d));
                prob[a] = s * scale;
            }
            softmax_inplace(std::span<double>(prob));
            double dot = 0.0;
            for (std::size_t a = 0; a < keys.size(); ++a) {
                double s = 0.0;
                for (std::size_t d = 0; d < dh; ++d)
                    s += static_cast<double>(d_head(t, d)) * static_cast<double>(proj.v(keys[a], d));
                dprob[a] = s;
                dot += prob[a] * s;
            }
            for (std::size_t a = 0; a < keys.size(); ++a) {
                const std::size_t j = keys[a];
                const double dz = prob[a] * (dprob[a] - dot) * scale;
                for (std::size_t d = 0; d < dh; ++d) {
                    dv(j, d) += static_cast<T>(prob[a] * static_cast<double>(d_head(t, d)));
                    dq(t, d) += static_cast<T>(dz * static_cast<double>(proj.k(j, d)));
                    dk(j, d) += static_cast<T>(dz * static_cast<double>(proj.q(t, d)));
                }
            }
        }
    }
}

template <class T>
void projections_backward(const Tensor2<T>& features, const ZFormerParams<T>& p, const Tensor2<T>& dq,
                          const Tensor2<T>& dk, const Tensor2<T>& dv, ZFormerGrads<T>& grads) {
    add_into(grads.input, linear_backward(p.w_q, features, dq, grads.w_q));
    add_into(grads.input, linear_backward(p.w_k, features, dk, grads.w_k));
    add_into(grads.input, linear_backward(p.w_v, features, dv, grads.w_v));
}

}  // namespace detail

/// Gradients of group_attention's output given d_out (n x model_width).
template <class T>
ZFormerGrads<T> group_attention_backward(const Tensor2<T>& features, const ZFormerParams<T>& p,
                                         const AttentionConfig& cfg, const Tensor2<T>& d_out) {
    const std::size_t n = features.rows;
    const auto proj = project_qkv(features, p);
    const auto g = group_heads(proj, cfg.block_len);
    ZFormerGrads<T> grads(p, n);
    const auto tokens = broadcast_blocks(g.block_out, n, cfg.block_len);
    const auto d_tokens = linear_backward(p.w_o, tokens, d_out, grads.w_o);
    Tensor2<T> d_block_out(g.block_out.rows, g.block_out.cols);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t d = 0; d < d_tokens.cols; ++d) d_block_out(t / cfg.block_len, d) += d_tokens(t, d);
    Tensor2<T> dq(n, cfg.head_width), dk(n, cfg.head_width), dv(n, cfg.head_width);
    detail::group_heads_backward(g, d_block_out, n, cfg.block_len, dq, dk, dv);
    detail::projections_backward(features, p, dq, dk, dv, grads);
    return grads;
}

/// Gradients of topk_attention's output with the given (frozen) selection.
template <class T>
ZFormerGrads<T> topk_attention_backward(const Tensor2<T>& features, const BlockSelection& selection,
                                        const ZFormerParams<T>& p, const AttentionConfig& cfg,
                                        const Tensor2<T>& d_out) {
    const std::size_t n = features.rows;
    const auto proj = project_qkv(features, p);
    ZFormerGrads<T> grads(p, n);
    const auto head = selection_heads(proj, selection, cfg.block_len);
    const auto d_head = linear_backward(p.w_o, head, d_out, grads.w_o);
    Tensor2<T> dq(n, cfg.head_width), dk(n, cfg.head_width), dv(n, cfg.head_width);
    detail::selection_heads_backward(proj, selection, cfg.block_len, d_head, dq, dk, dv);
    detail::projections_backward(features, p, dq, dk, dv, grads);
    return grads;
}

template <class T>
struct GatedFuseGrads {
    LinearGrad<T> gate;
    Tensor2<T> features, attn_grp, attn_sel;
};

template <class T>
GatedFuseGrads<T> gated_fuse_backward(const Tensor2<T>& features, const Tensor2<T>& attn_grp,
                                      const Tensor2<T>& attn_sel, const ZFormerParams<T>& p,
                                      const Tensor2<T>& d_out) {
    const std::size_t n = features.rows, w = attn_grp.cols;
    const auto g = gate_values(features, p);
    GatedFuseGrads<T> out{LinearGrad<T>(p.gate), {}, Tensor2<T>(n, w), Tensor2<T>(n, w)};
    Tensor2<T> d_logits(n, 2);
    for (std::size_t t = 0; t < n; ++t) {
        double dg1 = 0.0, dg2 = 0.0;
        const double g1 = g(t, 0), g2 = g(t, 1);
        for (std::size_t c = 0; c < w; ++c) {
            const double up = d_out(t, c);
            dg1 += up * static_cast<double>(attn_grp(t, c));
            dg2 += up * static_cast<double>(attn_sel(t, c));
            out.attn_grp(t, c) = static_cast<T>(g1 * up);
            out.attn_sel(t, c) = static_cast<T>(g2 * up);
        }
        d_logits(t, 0) = static_cast<T>(dg1 * g1 * (1.0 - g1));
        d_logits(t, 1) = static_cast<T>(dg2 * g2 * (1.0 - g2));
    }
    out.features = linear_backward(p.gate, features, d_logits, out.gate);
    return out;
}

/// Gradients of block_features given d_out (clusters x model_width), using the
/// activations and selection recorded in `cache`.
template <class T>
ZFormerGrads<T> block_features_backward(const BlockCache<T>& cache, const ZFormerParams<T>& p,
                                        const AttentionConfig& cfg, const Tensor2<T>& d_out) {
    const std::size_t n = cache.input.rows, w = cache.input.cols;
    ZFormerGrads<T> grads(p, n);
    const auto d_mean = linear_backward(p.pool_proj, cache.pooled_mean, d_out, grads.pool_proj);
    Tensor2<T> d_residual(n, w);
    for (std::size_t c = 0; c + 1 < cache.offsets.size(); ++c) {
        const double inv = 1.0 / static_cast<double>(cache.offsets[c + 1] - cache.offsets[c]);
        for (std::size_t r = cache.offsets[c]; r < cache.offsets[c + 1]; ++r)
            for (std::size_t k = 0; k < w; ++k) d_residual(r, k) = static_cast<T>(d_mean(c, k) * inv);
    }
    detail::add_into(grads.input, d_residual);
    auto fuse = gated_fuse_backward(cache.input, cache.attn_grp, cache.attn_sel, p, d_residual);
    grads.gate = std::move(fuse.gate);
    detail::add_into(grads.input, fuse.features);

    const auto d_group_tokens = linear_backward(p.w_o, cache.group_tokens, fuse.attn_grp, grads.w_o);
    const auto d_select_head = linear_backward(p.w_o, cache.select_head, fuse.attn_sel, grads.w_o);
    Tensor2<T> d_block_out(cache.group.block_out.rows, cache.group.block_out.cols);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t d = 0; d < d_group_tokens.cols; ++d)
            d_block_out(t / cfg.block_len, d) += d_group_tokens(t, d);
    Tensor2<T> dq(n, cfg.head_width), dk(n, cfg.head_width), dv(n, cfg.head_width);
    detail::group_heads_backward(cache.group, d_block_out, n, cfg.block_len, dq, dk, dv);
    detail::selection_heads_backward(cache.proj, cache.selection, cfg.block_len, d_select_head, dq, dk, dv);
    detail::projections_backward(cache.input, p, dq, dk, dv, grads);
    return grads;
}

// ---------------------------------------------------------------------------
// Full block.
// ---------------------------------------------------------------------------

struct BlockOutput {
    PointRepresentation rep;          // pooled, ordered by code
    std::vector<ZCode> codes;         // strictly increasing
    Quantizer quantizer;              // coarse grid the output codes live on
    std::vector<std::size_t> permutation;  // sort order applied to the input
    std::vector<std::size_t> offsets;      // cluster boundaries in sorted order
};

/// sort_by_code -> group attention -> top-k attention -> gated fusion
/// (added to the sorted features) -> Z-order pooling by cfg.pool_levels.
inline BlockOutput zformer_block(const PointRepresentation& rep, const Quantizer& q, const ZFormerParams<float>& p,
                                 const AttentionConfig& cfg) {
    cfg.validate();
    p.validate(cfg);
    if (rep.feature_width() != cfg.model_width)
        throw ConfigError("features have width " + std::to_string(rep.feature_width()) + ", block expects " +
                          std::to_string(cfg.model_width));
    auto sorted = sort_by_code(rep, q);
    auto pooled = pool_geometry(sorted.rep, sorted.codes, cfg.pool_levels, q, cfg.pooled_position);
    pooled.rep.features = block_features(sorted.rep.features, pooled.offsets, p, cfg);
    BlockOutput out;
    out.rep = std::move(pooled.rep);
    out.codes = std::move(pooled.codes);
    out.offsets = std::move(pooled.offsets);
    out.quantizer = q.coarsened(cfg.pool_levels);
    out.permutation = std::move(sorted.permutation);
    return out;
}

}  // namespace zsplat

#endif  // ZSPLAT_ZFORMER_HPP
