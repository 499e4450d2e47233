#pragma once

#include <cmath>
#include <stdexcept>

#include "bbm/grid.hpp"
#include "bbm/rng.hpp"

namespace bbm {

// Standard Brownian path on a grid: values[0] = x0, independent N(0, dt)
// increments.
inline GridPath simulate_brownian(double x0, const TimeGrid& grid, const SeedSpec& seed) {
    GridPath path(grid);
    Rng rng(seed);
    const double sd = std::sqrt(grid.dt);
    path[0] = x0;
    for (std::uint64_t i = 1; i <= grid.n_steps; ++i)
        path[i] = path[i - 1] + rng.normal(0.0, sd);
    return path;
}

// Probability that a Brownian bridge of duration h from a to b exceeds the
// linear level running from c0 (at the start) to c1 (at the end) somewhere
// inside the step. Reflection principle: exp(-2(c0-a)(c1-b)/h) when both
// endpoints are strictly below; 1 if either endpoint touches or exceeds.
inline double bridge_exceeds_prob(double a, double b, double h, double c0, double c1) {
    if (!(h > 0.0)) throw std::invalid_argument("bridge_exceeds_prob: h must be > 0");
    if (a >= c0 || b >= c1) return 1.0;
    return std::exp(-2.0 * (c0 - a) * (c1 - b) / h);
}

// Constant-level case.
inline double bridge_exceeds_prob(double a, double b, double h, double c) {
    return bridge_exceeds_prob(a, b, h, c, c);
}

}  // namespace bbm
