#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dafar {

// Deterministic RNG. mt19937_64 output is fully specified by the standard;
// the distribution transforms are hand-rolled so streams are identical across
// standard libraries and reproducible from a seed alone.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform01() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01(), u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return eng_() % n; }

    static uint64_t seed_mix(uint64_t a, uint64_t b) {
        // splitmix64 finalizer over the pair
        uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // derive an independent stream, e.g. one per layer or per sample
    static Rng seeded(uint64_t seed, uint64_t salt) { return Rng(seed_mix(seed, salt)); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace dafar
