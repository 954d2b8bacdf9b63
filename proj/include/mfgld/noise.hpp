// Counter-based splittable noise: every uniform variate is a pure function of
// (master_seed, replication, particle, time, role), so streams are reproducible
// across runs and worker counts and can be consumed in any order.
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

namespace mfgld {

enum class NoiseRole : std::uint64_t { State = 0, Action = 1, Ancestor = 2 };

namespace detail {

// splitmix64 finalizer; full-avalanche mix per key component
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr double to_unit(std::uint64_t h) {
    // top 53 bits -> [0,1)
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace detail

class NoiseDriver {
public:
    explicit NoiseDriver(std::uint64_t master_seed) : seed_(master_seed) {}

    std::uint64_t master_seed() const { return seed_; }

    std::uint64_t bits(std::uint64_t replication, std::uint64_t particle, std::uint64_t time,
                       NoiseRole role) const {
        std::uint64_t h = detail::mix64(seed_ ^ 0x6d756c7469736565ULL);
        h = detail::mix64(h ^ replication);
        h = detail::mix64(h ^ particle);
        h = detail::mix64(h ^ time);
        h = detail::mix64(h ^ static_cast<std::uint64_t>(role));
        return h;
    }

    double uniform(std::uint64_t replication, std::uint64_t particle, std::uint64_t time,
                   NoiseRole role) const {
        return detail::to_unit(bits(replication, particle, time, role));
    }

private:
    std::uint64_t seed_;
};

// Inverse-CDF sample in fixed label order: smallest k with u < w[0]+...+w[k].
// Falls back to the last index on accumulated-rounding edge cases, so the map
// is total on u in [0,1).
inline std::size_t inverse_cdf(std::span<const double> weights, double u) {
    if (weights.empty()) throw std::invalid_argument("inverse_cdf: empty weights");
    double c = 0.0;
    for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
        c += weights[k];
        if (u < c) return k;
    }
    return weights.size() - 1;
}

}  // namespace mfgld
