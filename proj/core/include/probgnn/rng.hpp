#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace probgnn {

/// Deterministic pseudo-random stream. All randomness in the library flows
/// from one root seed; subcomponents derive independent streams by stable
/// string labels, so adding a consumer never perturbs the others.
///
/// Draws come from std::mt19937_64 through explicit bit-to-double
/// conversions; the std distribution adapters are implementation-defined
/// and would break reproducibility guarantees.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(mix(seed)), engine_(mix(seed)) {}

    /// Child stream seeded from a hash of (this stream's seed, label, index).
    /// Independent of how many draws were already taken from the parent.
    RngStream derive(std::string_view label, std::uint64_t index = 0) const {
        std::uint64_t h = seed_;
        for (char c : label) h = mix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
        h = mix(h ^ index);
        return RngStream(h);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. No cached spare: the stream position
    /// stays a pure function of the draw count.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t v = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace probgnn
