// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace zoomsplat::detail {

inline int resolve_workers(int requested) {
    if (requested > 0) {
        return requested;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Run fn(i) for i in [0, n) with a static interleaved assignment. Each
/// index is handled by exactly one worker, so results written per index
/// do not depend on the worker count.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn &&fn) {
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
    if (count <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(count);
        for (std::size_t w = 0; w < count; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += count) {
                        fn(i);
                    }
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                }
            });
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

} // namespace zoomsplat::detail
