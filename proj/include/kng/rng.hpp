#ifndef KNG_RNG_HPP
#define KNG_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "kng/errors.hpp"

namespace kng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// xoshiro256** seeded through splitmix64. Every draw used by the library
/// goes through this generator so that results are reproducible across
/// platforms and standard-library implementations.
class Xoshiro256 {
public:
    using State = std::array<std::uint64_t, 4>;

    explicit Xoshiro256(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64(sm);
    }

    static Xoshiro256 from_state(const State& state) {
        Xoshiro256 g;
        g.s_ = state;
        return g;
    }

    const State& state() const { return s_; }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Unbiased integer in [0, bound) (Lemire's multiply-and-reject).
    std::uint64_t bounded(std::uint64_t bound) {
        if (bound == 0) throw ArgumentError("bounded(): bound must be positive");
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; one value per call, no caching.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    State s_{};
};

/// First `count` entries of a partial Fisher-Yates shuffle of 0..n-1.
/// Order is the draw order (not sorted).
inline std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n, std::uint64_t count,
                                                             Xoshiro256& rng) {
    if (count > n) throw ArgumentError("sample_without_replacement: count exceeds population");
    std::vector<std::uint64_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::uint64_t{0});
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t j = i + rng.bounded(n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
}

/// Full Fisher-Yates shuffle in place.
template <typename T>
void shuffle(std::vector<T>& items, Xoshiro256& rng) {
    for (std::size_t i = 0; i + 1 < items.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.bounded(items.size() - i));
        std::swap(items[i], items[j]);
    }
}

} // namespace kng

#endif // KNG_RNG_HPP
