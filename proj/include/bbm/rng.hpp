#pragma once

#include <cstdint>
#include <random>
#include <string_view>

// Seeding scheme: every stochastic operation takes a SeedSpec and is a pure
// function of (inputs, seed). Streams are derived with the splitmix64
// finalizer so that replicate r of experiment E can be reproduced in
// isolation and run on any worker. Gaussian and exponential variates come
// from std::mt19937_64 plus the standard-library distributions of the
// toolchain; this choice is fixed per release and acceptance tests use
// statistical tolerances rather than cross-toolchain bit-exactness.

namespace bbm {

struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;

    friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

// splitmix64 finalizer (Steele, Lea, Flood). Full 64-bit avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix64(mix64(a, b) ^ mix64(c));
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stream id for replicate r of a named experiment.
inline std::uint64_t stream_for(std::string_view experiment_id, std::uint64_t r) {
    return mix64(fnv1a64(experiment_id), r);
}

// Child stream: independent stream derived from an existing spec.
inline SeedSpec substream(const SeedSpec& s, std::uint64_t k) {
    return SeedSpec{s.master_seed, mix64(s.stream_id, k)};
}

// Stateless uniform in (0,1), used for per-step bridge-crossing flags keyed
// by (tree, particle, step). 53-bit mantissa, never exactly 0 or 1.
inline double u01_from_key(std::uint64_t key) {
    return (static_cast<double>(mix64(key) >> 11) + 0.5) * 0x1.0p-53;
}

class Rng {
public:
    explicit Rng(const SeedSpec& s) : eng_(seed_of(s)) {}

    double normal() { return normal_(eng_); }
    double normal(double mean, double sd) { return mean + sd * normal_(eng_); }
    double exponential(double rate) {
        return std::exponential_distribution<double>(rate)(eng_);
    }
    double uniform() { return unif_(eng_); }

    std::mt19937_64& engine() { return eng_; }

private:
    static std::uint64_t seed_of(const SeedSpec& s) {
        return mix64(mix64(s.master_seed) ^ mix64(s.stream_id, 0x5bd1e995u));
    }

    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace bbm
