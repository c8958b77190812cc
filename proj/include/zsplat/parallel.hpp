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

#ifndef ZSPLAT_PARALLEL_HPP
#define ZSPLAT_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace zsplat {

namespace detail {
inline std::atomic<int>& thread_override() {
    static std::atomic<int> value{0};
    return value;
}
}  // namespace detail

/// Caps intra-op parallelism. Zero restores the default (ZSPLAT_THREADS, then hardware).
inline void set_num_threads(int n) { detail::thread_override().store(std::max(0, n)); }

inline int num_threads() {
    if (int n = detail::thread_override().load(); n > 0) return n;
    if (const char* env = std::getenv("ZSPLAT_THREADS")) {
        try {
            int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs fn(begin, end) over a static partition of [0, count). Every index is
/// handled by exactly one call, so results written per index do not depend on
/// the thread count. The first exception thrown by a worker is rethrown.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, std::size_t min_chunk = 1) {
    if (count == 0) return;
    std::size_t workers = static_cast<std::size_t>(num_threads());
    workers = std::min(workers, (count + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
    if (workers <= 1) {
        fn(std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = count * w / workers;
        std::size_t end = count * (w + 1) / workers;
        pool.emplace_back([&, w, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace zsplat

#endif  // ZSPLAT_PARALLEL_HPP
