#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace splashlab {

// splitmix64; used both as a generator step and to mix seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e9b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic RNG with portable output (no std::*_distribution, whose
/// sequences vary across standard library implementations).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // warm up so that small seeds diverge immediately
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is negligible for n << 2^64
        return next_u64() % n;
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Derive an independent stream from a base seed and a purpose tag, so that
/// e.g. attack randomness never perturbs init or shuffle randomness.
inline std::uint64_t substream_seed(std::uint64_t base, const std::string& tag,
                                    std::uint64_t index = 0) {
    std::uint64_t h = base ^ 0x51f15eedbeefcafeULL;
    for (unsigned char c : tag) {
        h ^= c;
        splitmix64(h);
    }
    h ^= index * 0x2545f4914f6cdd1dULL;
    splitmix64(h);
    return h;
}

} // namespace splashlab
