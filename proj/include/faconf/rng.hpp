#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "faconf/errors.hpp"

namespace faconf {

// Deterministic random source. All draws are derived from raw mt19937-64
// output with fixed mappings (53-bit mantissa uniforms, Box-Muller normals,
// rejection-sampled integers), so a seed produces the same sequence on every
// platform. The standard <random> distributions are implementation-defined
// and deliberately not used.
class RngState {
public:
    explicit RngState(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    static constexpr const char* algorithm() { return "mt19937_64/canonical53/box-muller"; }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform draw in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the paired draw is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer in [0, n) by rejection, bias-free.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw DomainError("RngState::below requires n > 0");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Derive an independent stream, e.g. per (seed, epoch) or per fold.
    RngState derive(std::uint64_t salt) const {
        // splitmix64 of seed ^ salt
        std::uint64_t z = seed_ ^ (salt + 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return RngState(z ^ (z >> 31));
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace faconf
