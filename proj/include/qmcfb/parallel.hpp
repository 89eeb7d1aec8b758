#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace qmcfb {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/**
 * Deterministic parallel reduction over items 0..count-1.
 *
 * Items are grouped into fixed-size chunks; each chunk is folded sequentially
 * into its own accumulator and the chunk accumulators are merged by a pairwise
 * tree in chunk order. The result is therefore independent of the thread count.
 * The first failure (by chunk index) is rethrown after all workers stop.
 */
template <class Acc, class Make, class Add, class Merge>
Acc chunked_reduce(std::size_t count, std::size_t chunk, int threads, Make make, Add add, Merge merge) {
    if (chunk == 0) chunk = 1;
    const std::size_t nchunks = count == 0 ? 0 : (count + chunk - 1) / chunk;
    if (nchunks == 0) return make();
    std::vector<std::optional<Acc>> partial(nchunks);
    std::vector<std::exception_ptr> errors(nchunks);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};

    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= nchunks || failed.load()) return;
            try {
                Acc acc = make();
                const std::size_t end = std::min(count, (c + 1) * chunk);
                for (std::size_t i = c * chunk; i < end; ++i) add(acc, i);
                partial[c].emplace(std::move(acc));
            } catch (...) {
                errors[c] = std::current_exception();
                failed.store(true);
            }
        }
    };
    const int nthreads = std::max(1, std::min<int>(resolve_threads(threads), static_cast<int>(nchunks)));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    // pairwise tree: stride 1, 2, 4, ...
    for (std::size_t stride = 1; stride < nchunks; stride *= 2)
        for (std::size_t i = 0; i + stride < nchunks; i += 2 * stride) merge(*partial[i], *partial[i + stride]);
    return std::move(*partial[0]);
}

/// Order-preserving parallel map; results[i] = fn(i).
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t count, int threads, Fn fn) {
    std::vector<std::optional<T>> slots(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || failed.load()) return;
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
                failed.store(true);
            }
        }
    };
    const int nthreads = std::max(1, std::min<int>(resolve_threads(threads), static_cast<int>(std::max<std::size_t>(count, 1))));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<T> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace qmcfb
