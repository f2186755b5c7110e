#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace lrns {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based generator: output i is a pure function of (seed, i), so
/// streams can be split, replayed, and drawn on any thread with identical
/// results on a given platform.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed) : key_(detail::mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

    std::uint64_t next_u64() {
        counter_ += 0x9E3779B97F4A7C15ULL;
        return detail::mix64(key_ ^ counter_);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; safe as a log argument.
    double uniform_open() { return 1.0 - uniform(); }

    /// Standard normal via Box-Muller; the sine partner is cached.
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Derives an independent stream seed; used to hand each Monte-Carlo sample
/// its own generator so draw order never depends on scheduling.
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
    return detail::mix64(master ^ detail::mix64(stream + 0x9E3779B97F4A7C15ULL));
}

inline std::vector<double> gaussian_vector(std::uint64_t seed, std::size_t count) {
    CounterRng rng(seed);
    std::vector<double> out(count);
    for (double& v : out) v = rng.gaussian();
    return out;
}

}  // namespace lrns
