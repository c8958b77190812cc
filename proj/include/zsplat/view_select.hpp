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

#ifndef ZSPLAT_VIEW_SELECT_HPP
#define ZSPLAT_VIEW_SELECT_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "zsplat/errors.hpp"
#include "zsplat/morton.hpp"
#include "zsplat/parallel.hpp"

namespace zsplat {

/// A view and the sorted, deduplicated set of grid-cell codes its points touch.
struct ViewCandidate {
    std::size_t index = 0;
    std::vector<std::uint64_t> coverage_keys;
};

struct SelectionResult {
    std::vector<std::size_t> selected;
    std::size_t covered = 0;
    std::vector<std::size_t> marginal_gains;

    bool operator==(const SelectionResult&) const = default;
};

inline std::vector<ViewCandidate> build_candidates(std::span<const std::vector<Vec3f>> views, const Quantizer& q) {
    if (views.empty()) throw InputError("no views to select from");
    q.validate();
    std::vector<ViewCandidate> out(views.size());
    parallel_for(views.size(), [&](std::size_t v0, std::size_t v1) {
        for (std::size_t v = v0; v < v1; ++v) {
            auto& keys = out[v].coverage_keys;
            out[v].index = v;
            keys.reserve(views[v].size());
            for (const auto& p : views[v]) keys.push_back(encode(quantize(q, p), q.depth).value);
            std::sort(keys.begin(), keys.end());
            keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
        }
    });
    return out;
}

namespace detail {

inline std::size_t new_cells(const ViewCandidate& c, const std::unordered_set<std::uint64_t>& covered) {
    return static_cast<std::size_t>(std::count_if(c.coverage_keys.begin(), c.coverage_keys.end(),
                                                  [&](std::uint64_t k) { return !covered.contains(k); }));
}

/// Max-heap order on (gain, view): larger gain first, then lower view index.
struct HeapEntry {
    std::size_t gain;
    std::size_t slot;  // position in the candidate list
    std::size_t view;

    bool operator<(const HeapEntry& o) const { return gain < o.gain || (gain == o.gain && view > o.view); }
};

}  // namespace detail

/// Greedy maximum-coverage selection of at most `max_views` views with a
/// max-heap. After each acceptance the heap is rebuilt with the exact marginal
/// gain of every remaining view; views whose gain does not exceed `min_gain`
/// are dropped. Selection stops when M views are chosen or nothing is left.
inline SelectionResult select_views(std::span<const ViewCandidate> candidates, std::size_t max_views,
                                    std::size_t min_gain = 0) {
    if (max_views < 1) throw InputError("max_views must be >= 1");
    SelectionResult result;
    std::unordered_set<std::uint64_t> covered;
    std::priority_queue<detail::HeapEntry> heap;
    for (std::size_t s = 0; s < candidates.size(); ++s)
        heap.push({candidates[s].coverage_keys.size(), s, candidates[s].index});
    for (std::size_t round = 0; round < max_views && !heap.empty(); ++round) {
        bool found = false;
        while (!heap.empty() && !found) {
            const auto top = heap.top();
            heap.pop();
            const auto& cand = candidates[top.slot];
            const std::size_t gain = detail::new_cells(cand, covered);
            if (gain > min_gain) {
                covered.insert(cand.coverage_keys.begin(), cand.coverage_keys.end());
                result.selected.push_back(cand.index);
                result.marginal_gains.push_back(gain);
                found = true;
            }
        }
        if (!found) break;
        std::priority_queue<detail::HeapEntry> rebuilt;
        while (!heap.empty()) {
            auto entry = heap.top();
            heap.pop();
            entry.gain = detail::new_cells(candidates[entry.slot], covered);
            if (entry.gain > min_gain) rebuilt.push(entry);
        }
        heap = std::move(rebuilt);
    }
    result.covered = covered.size();
    return result;
}

/// Reference greedy: every round rescans all unselected views and takes the
/// largest marginal gain (lower view index on ties).
inline SelectionResult naive_greedy(std::span<const ViewCandidate> candidates, std::size_t max_views,
                                    std::size_t min_gain = 0) {
    if (max_views < 1) throw InputError("max_views must be >= 1");
    SelectionResult result;
    std::unordered_set<std::uint64_t> covered;
    std::vector<bool> taken(candidates.size(), false);
    while (result.selected.size() < max_views) {
        std::size_t best = candidates.size(), best_gain = 0;
        for (std::size_t s = 0; s < candidates.size(); ++s) {
            if (taken[s]) continue;
            const std::size_t gain = detail::new_cells(candidates[s], covered);
            if (best == candidates.size() || gain > best_gain ||
                (gain == best_gain && candidates[s].index < candidates[best].index)) {
                best = s;
                best_gain = gain;
            }
        }
        if (best == candidates.size() || best_gain <= min_gain) break;
        taken[best] = true;
        covered.insert(candidates[best].coverage_keys.begin(), candidates[best].coverage_keys.end());
        result.selected.push_back(candidates[best].index);
        result.marginal_gains.push_back(best_gain);
    }
    result.covered = covered.size();
    return result;
}

}  // namespace zsplat

#endif  // ZSPLAT_VIEW_SELECT_HPP
