#pragma once

// Deterministic random streams.
//
// Algorithm (version 1): the engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard. It is seeded with
// splitmix64(seed) ^ splitmix64(stream + 0x9E3779B97F4A7C15). Uniforms take
// the top 53 bits of one engine draw; normals use the Box-Muller transform on
// two uniforms and return both variates in order.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>

namespace abcg {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

class SeededRng {
public:
    SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream), engine_(splitmix64(seed) ^ splitmix64(stream + 0x9E3779B97F4A7C15ULL))
    {
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    /// A generator on a different stream of the same seed.
    SeededRng substream(std::uint64_t stream) const { return SeededRng(seed_, stream); }

    /// Uniform in (0, 1).
    double uniform()
    {
        const std::uint64_t bits = engine_() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double normal()
    {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        return radius * std::cos(angle);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

} // namespace abcg
