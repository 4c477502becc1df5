#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace rcp {

/// Deterministic pseudo-random stream used by every synthetic-data generator.
///
/// The core step is splitmix64 (Steele et al., "Fast splittable pseudorandom
/// number generators"): state += 0x9E3779B97F4A7C15, output = finalizing mix.
/// Doubles are formed from the top 53 bits, normals via Box-Muller, sphere
/// directions via the (z, phi) area-preserving map. No standard-library
/// distributions are involved, so identical seeds give identical sequences on
/// every platform with IEEE-754 doubles.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (consumes two uniforms, returns one).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Eigen::Vector3d normal3() {
        const double x = normal(), y = normal(), z = normal();
        return {x, y, z};
    }

    /// Uniform direction on the unit sphere.
    Eigen::Vector3d unit_vector() {
        const double z = uniform(-1.0, 1.0);
        const double phi = uniform(0.0, 2.0 * M_PI);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }

private:
    std::uint64_t state_;
};

}  // namespace rcp
