#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace hijacklab {

/// SplitMix64 step. Used for seeding and for deriving per-component seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent seed stream from a base seed and a stream tag.
/// Two distinct tags give statistically unrelated streams for the same base.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag);

/// FNV-1a 64-bit hash, used for config hashes and artifact provenance.
std::uint64_t fnv1a64(std::string_view bytes);

/// Deterministic pseudo-random generator: xoshiro256++ seeded via SplitMix64.
///
/// Every experiment in the pipeline draws randomness exclusively through this
/// generator so that runs are reproducible from a single 64-bit seed.
/// Gaussians come from the Box-Muller transform (pairs generated, one cached).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random mantissa bits.
    double uniform();

    /// Standard normal deviate (Box-Muller).
    double normal();

    /// Uniform integer in [0, n), unbiased (rejection sampling). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace hijacklab
