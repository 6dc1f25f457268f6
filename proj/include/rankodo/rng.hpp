#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace rankodo::rng {

// splitmix64 finalizer. Used to derive decorrelated substream seeds so
// per-sample work can run in any order without changing results.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed of substream `index` under a root seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(seed ^ mix64(index));
}

// All randomness flows through mt19937_64, whose output sequence is fixed
// by the standard; together with the explicit Box-Muller below this keeps
// every stochastic operation reproducible from its seed.
using Engine = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& eng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(eng);
}

// Standard normal via Box-Muller on explicit uniforms. We do not use
// std::normal_distribution: its output is implementation-defined.
class NormalSampler {
  public:
    explicit NormalSampler(std::uint64_t seed) : eng_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] keeps the log finite.
        const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform01(eng_);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

  private:
    Engine eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rankodo::rng
