#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bbm/barriers.hpp"
#include "bbm/bessel.hpp"
#include "bbm/brownian.hpp"
#include "bbm/engine.hpp"
#include "bbm/spine.hpp"

// Fast invariant battery behind the `selftest` subcommand: arithmetic
// identities, sandwich bounds, determinism contracts and a couple of coarse
// statistical checks. Runs in a few seconds.

namespace bbm::selftest {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

inline std::vector<CheckResult> run_all(std::uint64_t seed = 20240901) {
    std::vector<CheckResult> out;
    auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
        out.push_back({name, ok, detail});
    };

    // density sandwich on a random sweep
    {
        Rng rng(SeedSpec{seed, 1});
        bool ok = true;
        for (int i = 0; i < 2000 && ok; ++i) {
            const double t = 0.1 + 49.9 * rng.uniform();
            const double x = 6.0 * rng.uniform();
            const double z = 6.0 * rng.uniform();
            const double p = bessel::bessel_density(t, x, z);
            const auto b = bessel::bessel_density_bounds(t, x, z);
            ok = b.lower <= p + 1e-12 && p <= b.upper + 1e-12;
        }
        check("bessel density sandwich", ok);
    }

    // density normalization by adaptive quadrature
    {
        bool ok = true;
        for (double t : {0.5, 1.0, 5.0})
            for (double x : {0.1, 1.0, 3.0}) {
                const double mass = boost::math::quadrature::gauss_kronrod<double, 61>::
                    integrate([&](double z) { return bessel::bessel_density(t, x, z); },
                              0.0, x + 40.0 * std::sqrt(t), 12, 1e-12);
                ok = ok && std::abs(mass - 1.0) < 1e-8;
            }
        check("bessel density normalization", ok);
    }

    // window probability against adaptive quadrature
    {
        bool ok = true;
        for (auto [h, x] : {std::pair{1.0, 1.0}, {0.01, 1.5}, {5.0, 0.0}, {2.0, 0.3}}) {
            const double q = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                [&](double z) { return bessel::bessel_density(h, x, z); }, 1.0, 2.0, 12,
                1e-13);
            ok = ok && std::abs(q - bessel::bessel_window_prob(h, x, 1.0, 2.0)) < 1e-10;
        }
        check("bessel window probability", ok);
    }

    // bridge crossing: value, symmetry, monotonicity
    {
        const double v = bridge_exceeds_prob(0.0, 0.0, 1.0, 1.0);
        bool ok = std::abs(v - std::exp(-2.0)) < 1e-15;
        ok = ok && bridge_exceeds_prob(0.2, -0.3, 1.7, 1.1) ==
                       bridge_exceeds_prob(-0.3, 0.2, 1.7, 1.1);
        ok = ok && bridge_exceeds_prob(0, 0, 1, 0.5) > bridge_exceeds_prob(0, 0, 1, 1.0);
        ok = ok && bridge_exceeds_prob(1.0, 0.0, 1.0, 1.0) == 1.0;
        check("bridge crossing probability", ok);
    }

    // determinism of the samplers
    {
        const TimeGrid g = TimeGrid::over(1.0, 0.01);
        const SeedSpec s{seed, 42};
        const auto a = simulate_brownian(5.0, g, s);
        const auto b = simulate_brownian(5.0, g, s);
        bool ok = a.values == b.values && a.front() == 5.0;
        const auto y1 = bessel::sample_bessel(bessel::BesselParams(1.0), g, s);
        const auto y2 = bessel::sample_bessel(bessel::BesselParams(1.0), g, s);
        ok = ok && y1.values == y2.values;
        engine::BbmConfig bc;
        bc.horizon = 2.0;
        const auto t1 = engine::simulate_bbm(bc, s);
        const auto t2 = engine::simulate_bbm(bc, s);
        ok = ok && t1.records.size() == t2.records.size() &&
             engine::max_at(t1, 2.0) == engine::max_at(t2, 2.0);
        check("determinism of samplers", ok);
    }

    // smoothed curve: agreement region, symmetry, curvature band
    {
        bool ok = true;
        for (double t : {8.0, 20.0, 50.0}) {
            for (int i = 1; i < 400 && ok; ++i) {
                const double s = t * i / 400.0;
                const auto jet = barriers::L_smooth(s, t);
                const auto mir = barriers::L_smooth(t - s, t);
                ok = std::abs(jet.value - mir.value) < 1e-10;
                if (s < t / 2 - 1 || s > t / 2 + 1)
                    ok = ok && std::abs(jet.value - barriers::l_curve(s, t)) < 1e-12;
                else  // the curvature band applies on the smoothing window
                    ok = ok && jet.d2 <= 1e-12 && jet.d2 >= -10.0 / t - 1e-12;
            }
        }
        check("smoothed barrier curve", ok);
    }

    // spine weight: the two stochastic-integral routes agree for linear f
    {
        const double t = 4.0, alpha = 1.0;
        const spine::LinearCurve f{barriers::beta(t, 0.0)};
        const TimeGrid g = TimeGrid::over(t, 0.01);
        bool ok = true;
        for (int i = 0; i < 20 && ok; ++i) {
            const auto xi = spine::sample_spine_path(alpha, f, g, SeedSpec{seed, 100 + static_cast<std::uint64_t>(i)});
            const double fsq = f.slope * f.slope * t;
            ok = std::abs(spine::log_zeta_by_parts(xi, f, alpha, fsq) -
                          spine::log_zeta_ito(xi, f, alpha, fsq)) < 1e-10;
        }
        check("spine weight identity (linear barrier)", ok);
    }

    // population mean: E|N(2)| = e^2 within 3 standard errors
    {
        Accumulator acc;
        for (std::uint64_t r = 0; r < 4000; ++r) {
            engine::BbmConfig bc;
            bc.horizon = 2.0;
            bc.dt = 0.0;
            const auto fm = engine::front_maxima(bc, SeedSpec{seed, mix64(7, r)});
            acc.add(static_cast<double>(fm.population));
        }
        const double target = std::exp(2.0);
        const bool ok = std::abs(acc.mean() - target) < 3.0 * acc.std_error() + 0.02 * target;
        check("population mean e^t", ok,
              "mean=" + std::to_string(acc.mean()) + " target=" + std::to_string(target));
    }

    // first-moment quadrature vs spine Monte Carlo at t=4
    {
        const double t = 4.0;
        const double q = spine::expected_H_quadrature(0.0, t);
        const double beta = barriers::beta(t, 0.0);
        const auto est = spine::many_to_one_estimate(
            spine::endpoint_window_indicator({beta * t - 1.0, beta * t}), 1.0,
            spine::LinearCurve{beta}, t, 20000, SeedSpec{seed, 77}, 0.01);
        const bool ok = std::abs(est.mean - q) < 3.0 * est.std_error;
        check("many-to-one vs quadrature", ok,
              "mc=" + std::to_string(est.mean) + " quad=" + std::to_string(q));
    }

    return out;
}

// Prints one line per check; returns true when everything passed.
inline bool report(const std::vector<CheckResult>& results) {
    bool all = true;
    for (const auto& r : results) {
        std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.empty() ? "" : ": ", r.detail.c_str());
        all = all && r.pass;
    }
    return all;
}

}  // namespace bbm::selftest
