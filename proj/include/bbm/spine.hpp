#pragma once

#include <cmath>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bbm/barriers.hpp"
#include "bbm/bessel.hpp"
#include "bbm/estimate.hpp"
#include "bbm/grid.hpp"
#include "bbm/rng.hpp"

// Spine importance sampling. The expected number of particles staying below
// alpha + f(s) equals e^t times the expectation of 1/zeta(t) under the
// measure where alpha + f(t) - xi_t is a Bessel-3 process from alpha, with
//   zeta(t) = (1/alpha)(alpha + f(t) - xi_t) exp(int f' dxi - 1/2 int f'^2 ds).
// Second moments reduce to a two-spine expectation with an exponential split
// time. Both are implemented here, together with the deterministic
// quadrature for the first moment of the endpoint-window count.

namespace bbm::spine {

// f(s) = slope * s; the curve is the barrier minus its offset, f(0) = 0.
struct LinearCurve {
    double slope = 0.0;
    double value(double s) const { return slope * s; }
    double d1(double) const { return slope; }
    double d2(double) const { return 0.0; }
};

// f(s) = slope * s + L(s) on [0, t]; the smoothed logarithmic barrier shape.
struct CurvedCurve {
    double t_horizon = 0.0;
    double slope = 0.0;
    double value(double s) const {
        return slope * s + barriers::L_smooth(s, t_horizon).value;
    }
    double d1(double s) const { return slope + barriers::L_smooth(s, t_horizon).d1; }
    double d2(double s) const { return barriers::L_smooth(s, t_horizon).d2; }
};

namespace detail {

template <class Curve>
double f1_sq_integral(const Curve& f, double t) {
    auto integrand = [&](double s) {
        const double d = f.d1(s);
        return d * d;
    };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, t,
                                                                         12, 1e-12);
}

}  // namespace detail

// log zeta(t) with the stochastic integral evaluated through integration by
// parts, int f' dxi = f'(t) xi_t - int f''(s) xi_s ds (xi_0 = 0), the second
// integral by the trapezoid rule on the grid.
template <class Curve>
double log_zeta_by_parts(const GridPath& xi, const Curve& f, double alpha,
                         double f1_sq_int) {
    const double t = xi.grid.t_end();
    const double xt = xi.back();
    double trap = 0.0;
    for (std::uint64_t i = 0; i <= xi.grid.n_steps; ++i) {
        const double w = (i == 0 || i == xi.grid.n_steps) ? 0.5 : 1.0;
        trap += w * f.d2(xi.grid.time(i)) * xi[i];
    }
    trap *= xi.grid.dt;
    const double stoch = f.d1(t) * xt - trap;
    const double dist = alpha + f.value(t) - xt;
    return std::log(dist / alpha) + stoch - 0.5 * f1_sq_int;
}

// log zeta(t) with the stochastic integral as a left-point Ito sum; agrees
// with the by-parts form exactly for linear f and to O(dt) otherwise.
template <class Curve>
double log_zeta_ito(const GridPath& xi, const Curve& f, double alpha, double f1_sq_int) {
    const double t = xi.grid.t_end();
    double stoch = 0.0;
    for (std::uint64_t i = 0; i < xi.grid.n_steps; ++i)
        stoch += f.d1(xi.grid.time(i)) * (xi[i + 1] - xi[i]);
    const double dist = alpha + f.value(t) - xi.back();
    return std::log(dist / alpha) + stoch - 0.5 * f1_sq_int;
}

// Spine path xi_s = alpha + f(s) - Y_s with Y a Bessel-3 from alpha.
template <class Curve>
GridPath sample_spine_path(double alpha, const Curve& f, const TimeGrid& grid,
                           const SeedSpec& seed) {
    GridPath y = bessel::sample_bessel(bessel::BesselParams(alpha), grid, seed);
    GridPath xi(grid);
    for (std::uint64_t i = 0; i <= grid.n_steps; ++i)
        xi[i] = alpha + f.value(grid.time(i)) - y[i];
    return xi;
}

// Estimate of E[ sum_{v in N(t)} g_t(v) 1{X_v(s) < alpha + f(s) for s <= t} ]
// as the sample mean of e^t g(xi)/zeta(t) over n spine draws.
template <class Curve, class Functional>
MonteCarloEstimate many_to_one_estimate(Functional&& g, double alpha, const Curve& f,
                                        double t, std::uint64_t n, const SeedSpec& seed,
                                        double dt = 0.005) {
    if (!(t > 0.0) || !(alpha > 0.0))
        throw std::invalid_argument("many_to_one_estimate: need t > 0 and alpha > 0");
    if (n < 1) throw std::invalid_argument("many_to_one_estimate: n must be >= 1");
    const TimeGrid grid = TimeGrid::over(t, dt);
    const double f1_sq = detail::f1_sq_integral(f, t);

    Accumulator acc;
    for (std::uint64_t i = 0; i < n; ++i) {
        const GridPath xi = sample_spine_path(alpha, f, grid, substream(seed, i));
        const double log_zeta = log_zeta_by_parts(xi, f, alpha, f1_sq);
        if (!std::isfinite(log_zeta))
            throw std::runtime_error("many_to_one_estimate: degenerate spine weight");
        acc.add(std::exp(t - log_zeta) * g(xi));
    }
    return acc.estimate(seed);
}

inline auto endpoint_window_indicator(const barriers::Window& w) {
    return [w](const GridPath& xi) { return w.contains(xi.back()) ? 1.0 : 0.0; };
}

// First moment of the endpoint-window count below the line beta*s + 1:
//   E[H(y,t)] = e^{t - beta^2 t/2 - beta} int_1^2 z^{-1} e^{beta z} p_t(1,z) dz,
// obtained from the many-to-one lemma with f(s) = beta*s, alpha = 1 and the
// substitution z = beta*t + 1 - xi_t. Deterministic to ~1e-10 relative.
inline double expected_H_quadrature(double y, double t) {
    if (!(t >= 1.0)) throw std::invalid_argument("expected_H_quadrature: t must be >= 1");
    if (!(y >= 0.0 && y <= std::sqrt(t)))
        throw std::invalid_argument("expected_H_quadrature: y must lie in [0, sqrt(t)]");
    const double beta = barriers::beta(t, y);
    auto integrand = [&](double z) {
        return std::exp(beta * z) / z * bessel::bessel_density(t, 1.0, z);
    };
    const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        integrand, 1.0, 2.0, 10, 1e-13);
    return std::exp(t - beta * beta * t / 2.0 - beta) * integral;
}

namespace detail {

// int_lo^hi e^{beta z}/z p_h(x,z) dz; composite fixed-order Gauss panels
// sized by the transition scale sqrt(h).
inline double window_weighted_integral(double h, double x, double lo, double hi,
                                       double beta) {
    if (h <= 0.0) return (lo <= x && x <= hi) ? std::exp(beta * x) / x : 0.0;
    auto integrand = [&](double z) {
        return std::exp(beta * z) / z * bessel::bessel_density(h, x, z);
    };
    const int panels =
        std::clamp(static_cast<int>(std::ceil((hi - lo) / std::sqrt(h))), 1, 64);
    double sum = 0.0;
    const double w = (hi - lo) / panels;
    for (int i = 0; i < panels; ++i)
        sum += boost::math::quadrature::gauss<double, 16>::integrate(
            integrand, lo + i * w, lo + (i + 1) * w);
    return sum;
}

}  // namespace detail

// Estimate of E[H(y,t)^2] from the two-spine decomposition. The T > t stratum
// equals E[H(y,t)] exactly (the split has not happened, and P(T > t) cancels
// e^{3t} down to the many-to-one form), so it is evaluated by quadrature.
// In the T <= t stratum the exponential split density cancels e^{(1+beta^2/2)T}
// analytically, leaving the tilt exp(-(1 - beta^2/2)T); the split time is
// importance-sampled from that tilt and both post-split endpoint factors
// integrate against the Bessel transition density in closed panels:
//   E[H^2] = E[H] + 2 e^{2t - beta^2 t - beta} int_0^t e^{-(1-beta^2/2)r}
//            E[ Y_r e^{-beta Y_r} G(t-r, Y_r)^2 ] dr,
//   G(h,x) = int_1^2 e^{beta z}/z p_h(x,z) dz.
// Weights are assembled in log space.
inline MonteCarloEstimate second_moment_H_estimate(double y, double t, std::uint64_t n,
                                                   const SeedSpec& seed, double dt = 0.005) {
    if (n < 1) throw std::invalid_argument("second_moment_H_estimate: n must be >= 1");
    const double first_moment = expected_H_quadrature(y, t);
    const double beta = barriers::beta(t, y);
    const double tilt = 1.0 - beta * beta / 2.0;
    const double log_prefactor = 2.0 * t - beta * beta * t - beta + std::numbers::ln2;
    const TimeGrid grid = TimeGrid::over(t, dt);

    Accumulator acc;
    for (std::uint64_t i = 0; i < n; ++i) {
        Rng rng(substream(seed, i));
        const auto split = bessel::detail::sample_tilted_split(tilt, t, rng.uniform());
        auto k = static_cast<std::uint64_t>(std::ceil(split.draw / grid.dt - 1e-12));
        if (k > grid.n_steps) k = grid.n_steps;
        const double tk = grid.time(k);
        const double x = bessel::detail::bessel_value_at(tk, 1.0, rng);
        const double g = detail::window_weighted_integral(t - tk, x, 1.0, 2.0, beta);
        if (g <= 0.0) {
            acc.add(0.0);
            continue;
        }
        const double log_w = log_prefactor + std::log(split.mass) + std::log(x) -
                             beta * x + 2.0 * std::log(g);
        acc.add(std::exp(log_w));
    }

    MonteCarloEstimate est = acc.estimate(seed);
    est.mean += first_moment;
    return est;
}

// Paley-Zygmund lower bound P(H(y,t) != 0) >= E[H]^2 / E[H^2], clamped to
// [0,1], with the error of the second-moment estimate propagated through.
inline MonteCarloEstimate paley_zygmund_lower_bound(double y, double t, std::uint64_t n,
                                                    const SeedSpec& seed,
                                                    double dt = 0.005) {
    const double m1 = expected_H_quadrature(y, t);
    const MonteCarloEstimate m2 = second_moment_H_estimate(y, t, n, seed, dt);
    if (!(m2.mean > 0.0))
        throw std::runtime_error("paley_zygmund_lower_bound: second moment estimate is 0; "
                                 "increase n");
    MonteCarloEstimate out;
    out.mean = std::clamp(m1 * m1 / m2.mean, 0.0, 1.0);
    out.std_error = m1 * m1 / (m2.mean * m2.mean) * m2.std_error;
    out.n = n;
    out.seed = seed;
    return out;
}

}  // namespace bbm::spine
