#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gridse/errors.hpp"

namespace gridse {

/// splitmix64 mixing step; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d4a2835df7ca6dULL;
    return z ^ (z >> 31);
}

/// Derive a child seed from (seed, stream index). Distinct streams are
/// statistically independent; the map is fixed so files stay reproducible.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0xa0761d6478bd642fULL * (stream + 1));
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    return a ^ (b << 1);
}

/// Deterministic random source. Wraps std::mt19937_64 (whose output sequence
/// is fixed by the standard) and implements every variate transform by hand,
/// because the std distribution objects are implementation defined and would
/// break byte-for-byte reproducibility across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer on [0, bound). Rejection sampling, so the result is
    /// exactly uniform for every bound.
    std::uint64_t uniform_int(std::uint64_t bound) {
        if (bound == 0) throw ArgumentError("uniform_int: bound must be positive");
        std::uint64_t threshold = (0ULL - bound) % bound;
        for (;;) {
            std::uint64_t r = engine_();
            if (r >= threshold) return r % bound;
        }
    }

    /// Normal(mean, std). Box-Muller without caching, so the draw count per
    /// call is fixed and streams stay aligned.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 1.0 - uniform01(); // (0, 1]
        double u2 = uniform01();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
        return mean + stddev * z;
    }

    /// k distinct values from {0, ..., m-1}, in random order.
    std::vector<int> sample_without_replacement(int m, int k) {
        if (k < 0 || k > m) throw ArgumentError("sample_without_replacement: need 0 <= k <= m");
        std::vector<int> pool(m);
        for (int i = 0; i < m; ++i) pool[i] = i;
        for (int i = 0; i < k; ++i) {
            int j = i + static_cast<int>(uniform_int(static_cast<std::uint64_t>(m - i)));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

    /// In-place Fisher-Yates shuffle (std::shuffle is implementation defined).
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace gridse
