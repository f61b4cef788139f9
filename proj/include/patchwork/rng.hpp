#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace patchwork {

// Pinned pseudo-random generator: xoshiro256** seeded through splitmix64.
// Every randomized component of the pipeline (split plans, parameter init,
// patch sampling, augmentation) draws from this generator so that results
// are reproducible across platforms and can be re-derived by other
// implementations from the documented algorithm alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        // splitmix64 expansion of the seed into the four-word state
        std::uint64_t x = seed;
        for (auto& word : state_) {
            x += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) from the top 53 bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Bounded draw used by the Fisher-Yates shuffle: next_u64() % n.
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    // Box-Muller; consumes exactly two draws per call.
    double normal(double mean = 0.0, double sigma = 1.0) {
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sigma * r * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // In-place Fisher-Yates, descending index, bounded draws as above.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
};

// Stream derivation for parallel sample workers: sample k draws from
// Rng(global_seed ^ golden-ratio spread of k) so streams are decorrelated
// but fully determined by (seed, index).
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) {
    return global_seed ^ (0x9E3779B97F4A7C15ULL * (index + 1));
}

} // namespace patchwork
