#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bbm/barriers.hpp"
#include "bbm/estimate.hpp"
#include "bbm/grid.hpp"
#include "bbm/rng.hpp"

// Bessel-3 toolkit: transition density with its two-sided bounds, exact
// window probabilities, path samplers (single process and the coupled pair
// with an exponential split time), and the Monte Carlo estimators for the
// two coupled-pair functionals used by the moment calculations.

namespace bbm::bessel {

// gamma = sqrt(2/pi), the constant in the density bounds.
inline constexpr double density_bound_gamma = 0.7978845608028654;

struct BesselParams {
    double x0 = 0.0;

    explicit BesselParams(double start) : x0(start) {
        if (!(x0 >= 0.0)) throw std::invalid_argument("BesselParams: x0 must be >= 0");
    }
};

inline double std_normal_cdf(double u) {
    return 0.5 * std::erfc(-u / std::numbers::sqrt2);
}

// Transition density of a Bessel-3 process over elapsed time t from x to z:
//   p_t(x,z) = z/(x sqrt(2 pi t)) (exp(-(z-x)^2/2t) - exp(-(z+x)^2/2t)),
// with the continuous limit sqrt(2/pi) z^2 t^{-3/2} exp(-z^2/2t) at x = 0.
// The sinh rewriting keeps the x -> 0 regime exact; the difference form is
// used when x z / t is large enough that sinh would overflow (no
// cancellation there, the two exponentials are far apart).
inline double bessel_density(double t, double x, double z) {
    if (!(t > 0.0)) throw std::invalid_argument("bessel_density: t must be > 0");
    if (!(x >= 0.0) || !(z >= 0.0))
        throw std::invalid_argument("bessel_density: x and z must be >= 0");
    if (z == 0.0) return 0.0;
    const double inv_sqrt_2pi_t = 1.0 / std::sqrt(2.0 * std::numbers::pi * t);
    const double w = x * z / t;
    if (w < 25.0) {
        // z/sqrt(2 pi t) * exp(-(z^2+x^2)/2t) * 2 sinh(xz/t)/x
        const double sinhc = w > 1e-8 ? std::sinh(w) / w : 1.0 + w * w / 6.0;
        return z * inv_sqrt_2pi_t * std::exp(-(z * z + x * x) / (2.0 * t)) * 2.0 * sinhc *
               (z / t);
    }
    const double d = std::exp(-(z - x) * (z - x) / (2.0 * t)) -
                     std::exp(-(z + x) * (z + x) / (2.0 * t));
    return z / x * inv_sqrt_2pi_t * d;
}

struct DensityBounds {
    double lower = 0.0;
    double upper = 0.0;
};

// Two-sided bounds sandwiching the density:
//   gamma z^2 t^{-3/2} e^{-z^2/2t - x^2/2t} <= p_t(x,z) <= gamma z^2 t^{-3/2}.
inline DensityBounds bessel_density_bounds(double t, double x, double z) {
    if (!(t > 0.0)) throw std::invalid_argument("bessel_density_bounds: t must be > 0");
    if (!(x >= 0.0) || !(z >= 0.0))
        throw std::invalid_argument("bessel_density_bounds: x and z must be >= 0");
    const double base = density_bound_gamma * z * z / (t * std::sqrt(t));
    return DensityBounds{base * std::exp(-(z * z + x * x) / (2.0 * t)), base};
}

// P(Bessel-3 from x lands in [lo, hi] after time h), in closed form via the
// Gaussian cdf. h = 0 degenerates to the indicator. Absolute accuracy is at
// machine level; values below ~1e-17 may be flushed to 0 by cancellation,
// which is harmless where this is used.
inline double bessel_window_prob(double h, double x, double lo, double hi) {
    if (h < 0.0) throw std::invalid_argument("bessel_window_prob: h must be >= 0");
    if (!(lo < hi)) throw std::invalid_argument("bessel_window_prob: need lo < hi");
    if (!(x >= 0.0)) throw std::invalid_argument("bessel_window_prob: x must be >= 0");
    const double a = std::max(lo, 0.0);
    const double b = hi;
    if (!(b > 0.0)) return 0.0;
    if (h == 0.0) return (a <= x && x <= b) ? 1.0 : 0.0;

    const double s = std::sqrt(h);
    if (x < 1e-14) {
        return std::sqrt(2.0 / std::numbers::pi) / s *
                   (a * std::exp(-a * a / (2.0 * h)) - b * std::exp(-b * b / (2.0 * h))) +
               2.0 * (std_normal_cdf(b / s) - std_normal_cdf(a / s));
    }

    double t1;
    if (x * b / h < 25.0) {
        auto g = [&](double u) {
            const double w = u * x / h;
            const double sinhc = w > 1e-8 ? std::sinh(w) / w : 1.0 + w * w / 6.0;
            return 2.0 * sinhc * (u / h);
        };
        t1 = s / std::sqrt(2.0 * std::numbers::pi) * std::exp(-x * x / (2.0 * h)) *
             (std::exp(-a * a / (2.0 * h)) * g(a) - std::exp(-b * b / (2.0 * h)) * g(b));
    } else {
        t1 = s / (x * std::sqrt(2.0 * std::numbers::pi)) *
             (std::exp(-(x - a) * (x - a) / (2.0 * h)) -
              std::exp(-(x - b) * (x - b) / (2.0 * h)) -
              std::exp(-(x + a) * (x + a) / (2.0 * h)) +
              std::exp(-(x + b) * (x + b) / (2.0 * h)));
    }
    const double t2 = std_normal_cdf((b - x) / s) - std_normal_cdf((a - x) / s) +
                      std_normal_cdf((b + x) / s) - std_normal_cdf((a + x) / s);
    const double p = t1 + t2;
    return p > 0.0 ? (p < 1.0 ? p : 1.0) : 0.0;
}

// Bessel-3 path as the modulus of a 3-d Brownian motion started at (x0,0,0).
inline GridPath sample_bessel(const BesselParams& params, const TimeGrid& grid,
                              const SeedSpec& seed) {
    GridPath path(grid);
    Rng rng(seed);
    const double sd = std::sqrt(grid.dt);
    std::array<double, 3> w{params.x0, 0.0, 0.0};
    path[0] = params.x0;
    for (std::uint64_t i = 1; i <= grid.n_steps; ++i) {
        w[0] += rng.normal(0.0, sd);
        w[1] += rng.normal(0.0, sd);
        w[2] += rng.normal(0.0, sd);
        path[i] = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    }
    return path;
}

// Coupled pair: Y1 is a Bessel-3 from 1, tau ~ Exp(2) independent of Y1,
// Y2 equals Y1 up to tau and afterwards evolves as an independent Bessel-3
// restarted from Y1 at the first grid point >= tau.
struct CoupledBesselSample {
    GridPath y1;
    GridPath y2;
    double tau = 0.0;
};

inline CoupledBesselSample sample_coupled_pair(const TimeGrid& grid, const SeedSpec& seed) {
    CoupledBesselSample out;
    out.tau = Rng(substream(seed, 0)).exponential(2.0);
    out.y1 = sample_bessel(BesselParams(1.0), grid, substream(seed, 1));
    out.y2 = out.y1;
    if (out.tau > grid.t_end()) return out;

    // First grid index at or after tau.
    std::uint64_t k = static_cast<std::uint64_t>(
        std::ceil((out.tau - grid.t_start) / grid.dt - 1e-12));
    if (k > grid.n_steps) k = grid.n_steps;

    Rng rng(substream(seed, 2));
    const double sd = std::sqrt(grid.dt);
    std::array<double, 3> w{out.y1[k], 0.0, 0.0};
    for (std::uint64_t i = k + 1; i <= grid.n_steps; ++i) {
        w[0] += rng.normal(0.0, sd);
        w[1] += rng.normal(0.0, sd);
        w[2] += rng.normal(0.0, sd);
        out.y2[i] = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    }
    return out;
}

namespace detail {

// Draw the value of a Bessel-3 at elapsed time h >= 0 started from x0, as
// the modulus of one exact 3-d Gaussian step.
inline double bessel_value_at(double h, double x0, Rng& rng) {
    if (h <= 0.0) return x0;
    const double sd = std::sqrt(h);
    const double w0 = x0 + rng.normal(0.0, sd);
    const double w1 = rng.normal(0.0, sd);
    const double w2 = rng.normal(0.0, sd);
    return std::sqrt(w0 * w0 + w1 * w1 + w2 * w2);
}

// Inverse cdf of the density ~ rate*exp(-rate*r) truncated to [0, span].
// Handles rate <= 0 (uniform limit / growing exponential) as well; returns
// the pair (draw, mass) with mass = integral of exp(-rate*r) over [0,span].
struct TiltedSplit {
    double draw = 0.0;
    double mass = 0.0;
};

inline TiltedSplit sample_tilted_split(double rate, double span, double u) {
    TiltedSplit out;
    if (std::abs(rate) < 1e-12) {
        out.draw = u * span;
        out.mass = span;
        return out;
    }
    const double em = -std::expm1(-rate * span);  // 1 - exp(-rate*span)
    out.mass = em / rate;
    out.draw = -std::log1p(-u * em) / rate;
    if (out.draw > span) out.draw = span;
    return out;
}

}  // namespace detail

// Estimator of the first coupled-pair functional,
//   E[ Y1_tau exp(2 tau - (3 log t / 2t) tau - beta Y1_tau)
//      1{1<=Y1_t<=2} 1{1<=Y2_t<=2} 1{tau<=t} ],
// with beta = beta(t,y). The exponential split density cancels the e^{2 tau}
// factor analytically; the split time is then importance-sampled from the
// remaining exp(-a tau) tilt and realized at the first grid time >= tau.
// Conditionally on the split value, both endpoint windows integrate in
// closed form, which removes the indicator variance.
inline MonteCarloEstimate lemma22_functional_estimate(double t, double y, std::uint64_t n,
                                                      const SeedSpec& seed, double dt = 1e-2) {
    if (!(t > 1.0)) throw std::invalid_argument("lemma22: t must be > 1");
    if (!(y >= 0.0)) throw std::invalid_argument("lemma22: y must be >= 0");
    if (n < 1) throw std::invalid_argument("lemma22: n must be >= 1");

    const double a = 1.5 * std::log(t) / t;
    const double beta = barriers::beta(t, y);
    const TimeGrid grid = TimeGrid::over(t, dt);

    Accumulator acc;
    for (std::uint64_t i = 0; i < n; ++i) {
        Rng rng(substream(seed, i));
        const auto split = detail::sample_tilted_split(a, t, rng.uniform());
        auto k = static_cast<std::uint64_t>(std::ceil(split.draw / grid.dt - 1e-12));
        if (k > grid.n_steps) k = grid.n_steps;
        const double tk = grid.time(k);
        const double x = detail::bessel_value_at(tk, 1.0, rng);
        const double d = bessel_window_prob(t - tk, x, 1.0, 2.0);
        acc.add(2.0 * split.mass * x * std::exp(-beta * x) * d * d);
    }
    return acc.estimate(seed);
}

// Parameters of the second functional: times s <= t with the shifted window
// offset a_{s,t} = (1/(2 sqrt 2)) log s - (1/(2 sqrt 2)) (log t / t) s.
struct Lemma23Params {
    double s = 0.0;
    double t = 0.0;
    double a_st = 0.0;

    Lemma23Params(double s_, double t_) : s(s_), t(t_) {
        if (!(s >= std::numbers::e && s <= t && t <= 2.0 * s))
            throw std::invalid_argument("Lemma23Params: need e <= s <= t <= 2s");
        const double c = 1.0 / (2.0 * std::numbers::sqrt2);
        a_st = c * std::log(s) - c * (std::log(t) / t) * s;
    }
};

// Estimator of the second coupled-pair functional,
//   E[ Y1_tau exp(2 tau - (log t / 2t) tau - beta_t Y1_tau)
//      1{a+1<=Y1_s<=a+2} 1{1<=Y2_t<=2} 1{tau<=s} ],
// same scheme as lemma22 with the split restricted to [0, s] and the two
// endpoint windows living at different times.
inline MonteCarloEstimate lemma23_functional_estimate(const Lemma23Params& p, std::uint64_t n,
                                                      const SeedSpec& seed, double dt = 1e-2) {
    if (n < 1) throw std::invalid_argument("lemma23: n must be >= 1");
    const double a = 0.5 * std::log(p.t) / p.t;
    const double bt = barriers::beta_t(p.t);
    const TimeGrid grid = TimeGrid::over(p.s, dt);

    Accumulator acc;
    for (std::uint64_t i = 0; i < n; ++i) {
        Rng rng(substream(seed, i));
        const auto split = detail::sample_tilted_split(a, p.s, rng.uniform());
        auto k = static_cast<std::uint64_t>(std::ceil(split.draw / grid.dt - 1e-12));
        if (k > grid.n_steps) k = grid.n_steps;
        const double tk = grid.time(k);
        const double x = detail::bessel_value_at(tk, 1.0, rng);
        const double d1 = bessel_window_prob(p.s - tk, x, p.a_st + 1.0, p.a_st + 2.0);
        const double d2 = bessel_window_prob(p.t - tk, x, 1.0, 2.0);
        acc.add(2.0 * split.mass * x * std::exp(-bt * x) * d1 * d2);
    }
    return acc.estimate(seed);
}

}  // namespace bbm::bessel
