#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace grouptraj {

// Seedable pseudo-random source with a pinned algorithm so that draws are
// reproducible bit-for-bit across platforms: std::mt19937_64 (whose output
// sequence is fixed by the standard) feeding explicit uniform and Box-Muller
// transforms. std::normal_distribution is deliberately avoided because its
// algorithm is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1) with 53 random mantissa bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller on two uniforms; the second value of
    // each pair is cached so consecutive calls consume the stream evenly.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * pi_ * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Derives an independent stream seed from (seed, stream). One round of
    // splitmix64, used to give every sample / scene / epoch its own substream.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr double pi_ = 3.14159265358979323846;
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace grouptraj
