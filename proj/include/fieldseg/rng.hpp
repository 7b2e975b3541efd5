#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fieldseg {

/// Deterministic RNG with fully specified output streams. The distributions
/// are implemented here rather than through <random> adaptors so that the
/// generated sequences do not depend on the standard library in use.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    // splitmix64 step
    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    /// Standard normal via Box-Muller; the sine partner is discarded so each
    /// call consumes exactly two uniforms.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma with integer shape k and unit scale: sum of k exponentials.
    double gamma_int(int k) {
        double acc = 0.0;
        for (int i = 0; i < k; ++i) {
            double u = uniform01();
            if (u < 1e-300) u = 1e-300;
            acc += -std::log(u);
        }
        return acc;
    }

private:
    std::uint64_t state_;
};

/// Folds a tag into a seed (FNV-1a) so that independent sub-streams can be
/// derived from one scene or model seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 1469598103934665603ull ^ seed;
    for (char ch : tag) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace fieldseg
