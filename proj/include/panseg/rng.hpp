#ifndef PANSEG_RNG_HPP
#define PANSEG_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "panseg/common.hpp"

namespace panseg {

// SplitMix64 finalizer (Steele, Lea, Flood 2014). Used both as the stream
// step and to derive independent substreams, so every dataset, split and
// weight draw is reproducible from a single integer seed on any platform.
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Deterministic PRNG: SplitMix64 stream with golden-ratio increment.
/// next() = mix64(state += 0x9E3779B97F4A7C15). Never the platform default
/// engine; the sequence is part of the on-disk reproducibility contract.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

    /// Independent substream k of the current state: Rng(mix64(state ^ mix64(k + 1))).
    Rng fork(uint64_t k) const { return Rng(mix64(state_ ^ mix64(k + 1))); }

    uint64_t state() const { return state_; }

    /// Uniform in [0,1): top 53 bits of next().
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        require(n > 0, ErrorKind::invalid_argument, "Rng::below: n must be positive");
        // Rejection sampling to avoid modulo bias.
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller on two uniform draws.
    double normal() {
        double u1 = (double(next() >> 11) + 0.5) * 0x1.0p-53;  // (0,1)
        double u2 = double(next() >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Gamma(shape k >= 1, scale theta) via Marsaglia-Tsang squeeze.
    double gamma(double shape, double scale) {
        require(shape >= 1.0, ErrorKind::invalid_argument, "Rng::gamma: shape must be >= 1");
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
        }
    }

    /// Multiplicative speckle factor: unit-mean Gamma(k, 1/k).
    double speckle(double shape) { return gamma(shape, 1.0 / shape); }

    /// Fisher-Yates shuffle driven by below().
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

}  // namespace panseg

#endif  // PANSEG_RNG_HPP
