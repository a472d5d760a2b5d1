#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace rwb {

/// Counter-based PRNG (splitmix64 stream). The full generator state is
/// (seed, draw counter), so snapshots are two integers and restoring is O(1).
/// All distribution sampling is implemented here from raw 64-bit draws;
/// nothing depends on implementation-defined <random> distributions, which
/// keeps decision sequences reproducible across compilers.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t draws = 0) : seed_(seed), draws_(draws) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + (++draws_) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform on the open interval (0,1); never returns 0 or 1, so logs of
    /// draws are always finite.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    /// Uniform integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        return static_cast<int>((static_cast<__uint128_t>(next_u64()) * static_cast<__uint128_t>(n)) >> 64);
    }

    int bernoulli(double p) { return uniform01() < p ? 1 : 0; }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    double normal() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }

    /// Gumbel(0, scale), inverse-CDF from an open-interval uniform.
    double gumbel(double scale) { return -scale * std::log(-std::log(uniform01())); }

    /// Gamma(shape, 1) by Marsaglia-Tsang squeeze; shape < 1 handled by boosting.
    double gamma(double shape) {
        if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform01();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = 0.0;
            double v = 0.0;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double beta(double a, double b) {
        const double ga = gamma(a);
        const double gb = gamma(b);
        const double sum = ga + gb;
        return sum > 0.0 ? ga / sum : 0.5;
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return draws_; }

  private:
    static constexpr double kTwoPi = 6.283185307179586476925286766559;

    std::uint64_t seed_;
    std::uint64_t draws_;
};

/// Derives an independent stream from a base seed and a stream label,
/// e.g. one stream per (seed, policy) pair in an experiment.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base ^ (0x9E3779B97F4A7C15ull + (stream << 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace rwb
