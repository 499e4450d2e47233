#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "bbm/rng.hpp"

namespace bbm {

// Result of a Monte Carlo estimation: sample mean, standard error of the
// mean, sample count, and the seed that reproduces it.
struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t n = 0;
    SeedSpec seed{};
};

// Streaming accumulator. Shards combine associatively, so estimators can
// split n across workers and merge.
class Accumulator {
public:
    void add(double x) {
        ++n_;
        sum_ += x;
        sum_sq_ += x * x;
    }

    void merge(const Accumulator& other) {
        n_ += other.n_;
        sum_ += other.sum_;
        sum_sq_ += other.sum_sq_;
    }

    std::uint64_t count() const { return n_; }
    double mean() const { return n_ ? sum_ / static_cast<double>(n_) : 0.0; }

    double variance() const {
        if (n_ < 2) return 0.0;
        const double nn = static_cast<double>(n_);
        const double v = (sum_sq_ - sum_ * sum_ / nn) / (nn - 1.0);
        return v > 0.0 ? v : 0.0;
    }

    double std_error() const {
        return n_ ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }

    MonteCarloEstimate estimate(const SeedSpec& seed) const {
        return MonteCarloEstimate{mean(), std_error(), n_, seed};
    }

private:
    std::uint64_t n_ = 0;
    double sum_ = 0.0;
    double sum_sq_ = 0.0;
};

}  // namespace bbm
