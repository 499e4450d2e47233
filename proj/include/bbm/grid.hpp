#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace bbm {

// Uniform time grid: points t_start + i*dt, i = 0..n_steps.
struct TimeGrid {
    double t_start = 0.0;
    double dt = 0.0;
    std::uint64_t n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double start, double step, std::uint64_t n) : t_start(start), dt(step), n_steps(n) {
        if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be > 0");
        if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
    }

    // Grid over [0, horizon] with step as close to target_dt as possible while
    // keeping the horizon an exact grid point.
    static TimeGrid over(double horizon, double target_dt) {
        if (!(horizon > 0.0) || !(target_dt > 0.0))
            throw std::invalid_argument("TimeGrid::over: horizon and dt must be > 0");
        auto n = static_cast<std::uint64_t>(std::llround(horizon / target_dt));
        if (n < 1) n = 1;
        return TimeGrid(0.0, horizon / static_cast<double>(n), n);
    }

    double t_end() const { return t_start + static_cast<double>(n_steps) * dt; }
    double time(std::uint64_t i) const { return t_start + static_cast<double>(i) * dt; }
    std::uint64_t n_points() const { return n_steps + 1; }
};

// A real-valued process sampled on a grid; values.size() == grid.n_points().
struct GridPath {
    TimeGrid grid;
    std::vector<double> values;

    GridPath() = default;
    explicit GridPath(const TimeGrid& g) : grid(g), values(g.n_points(), 0.0) {}

    double front() const { return values.front(); }
    double back() const { return values.back(); }
    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }
};

}  // namespace bbm
