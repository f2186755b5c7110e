#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace lrns {

namespace detail {
inline std::atomic<int>& thread_count_slot() {
    static std::atomic<int> slot{0};
    return slot;
}
}  // namespace detail

inline int hardware_threads() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Worker-pool width used by parallel_for. 0 selects one worker per core.
/// The LRNS_THREADS environment variable seeds the initial value.
inline void set_threads(int n) { detail::thread_count_slot().store(n < 0 ? 0 : n); }

inline int threads() {
    int n = detail::thread_count_slot().load();
    if (n == 0) {
        if (const char* env = std::getenv("LRNS_THREADS")) {
            int parsed = std::atoi(env);
            if (parsed > 0) {
                detail::thread_count_slot().store(parsed);
                return parsed;
            }
        }
        return hardware_threads();
    }
    return n;
}

/// Static contiguous split of [begin, end) across the pool. Each index is
/// processed by exactly one worker, so writes to index-owned slots are
/// race-free and the result does not depend on the pool width. The first
/// worker exception (by chunk order) is rethrown after the join.
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body) {
    const std::size_t count = end > begin ? end - begin : 0;
    if (count == 0) return;
    const std::size_t nt =
        std::min<std::size_t>(static_cast<std::size_t>(threads()), count);
    if (nt <= 1 || count < 2) {
        for (std::size_t i = begin; i < end; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt - 1);
    const std::size_t chunk = (count + nt - 1) / nt;
    std::vector<std::exception_ptr> errors(nt, nullptr);
    for (std::size_t t = 1; t < nt; ++t) {
        const std::size_t lo = begin + t * chunk;
        if (lo >= end) break;
        const std::size_t hi = std::min(end, lo + chunk);
        pool.emplace_back([lo, hi, t, &body, &errors] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    const std::size_t hi0 = std::min(end, begin + chunk);
    try {
        for (std::size_t i = begin; i < hi0; ++i) body(i);
    } catch (...) {
        errors[0] = std::current_exception();
    }
    for (auto& th : pool) th.join();
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
}

/// Deterministic sample reduction: samples are grouped into fixed-size blocks,
/// block partials are accumulated in sample order within the block, and block
/// totals are merged in block order afterwards. The grouping is independent of
/// the pool width, so sums are bit-identical at any thread count.
inline constexpr std::size_t kReduceBlock = 16;

template <class State, class MakeZero, class AddSample, class Merge>
State deterministic_sample_sum(std::size_t count, MakeZero&& make_zero,
                               AddSample&& add_sample, Merge&& merge) {
    const std::size_t nblocks = (count + kReduceBlock - 1) / kReduceBlock;
    std::vector<State> partials;
    partials.reserve(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) partials.push_back(make_zero());
    parallel_for(0, nblocks, [&](std::size_t b) {
        const std::size_t lo = b * kReduceBlock;
        const std::size_t hi = std::min(count, lo + kReduceBlock);
        for (std::size_t m = lo; m < hi; ++m) add_sample(partials[b], m);
    });
    State total = make_zero();
    for (std::size_t b = 0; b < nblocks; ++b) merge(total, partials[b]);
    return total;
}

}  // namespace lrns
