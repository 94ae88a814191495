#pragma once

#include <cstdint>
#include <vector>

namespace streamdiar {

// Deterministic PRNG with hand-rolled distributions. Standard-library
// distributions are not pinned across implementations; seeded outputs here
// are part of the reproducibility contract, so the whole sampling path is
// self-contained.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();

    // Uniform in [lo, hi).
    double uniform(double lo, double hi);

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t bounded(std::uint64_t n);

    // Standard normal via Box-Muller.
    double normal();

    // 1 + Geometric(p) with mean `mean` (mean >= 1): number of Bernoulli
    // trials up to and including the first success.
    std::int64_t geometric_length(double mean);

    // In-place Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derives an independent stream; used to give each block or step its own
    // generator so consuming one stream never shifts another.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace streamdiar
