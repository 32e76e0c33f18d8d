#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace agg {

/// Counter-based splitmix64 generator. All randomness in the library goes
/// through this class so that a seed fully determines every draw sequence,
/// independent of platform or standard-library version.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Deterministically derives an independent stream from (seed, a, b).
    /// Used to give every sample/epoch/channel its own generator so results
    /// do not depend on evaluation order.
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        Rng mixer(seed);
        std::uint64_t s = mixer.next_u64();
        s ^= Rng(a ^ 0x9e3779b97f4a7c15ull).next_u64();
        s ^= Rng(b ^ 0xbf58476d1ce4e5b9ull).next_u64();
        return Rng(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. Draws two uniforms per call.
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n). Uses the 128-bit multiply reduction.
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>((static_cast<unsigned __int128>(next_u64()) * static_cast<std::uint64_t>(n)) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
            std::int64_t j = uniform_int(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

} // namespace agg
