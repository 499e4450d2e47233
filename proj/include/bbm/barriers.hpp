#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <variant>

namespace bbm::barriers {

inline constexpr double sqrt2 = std::numbers::sqrt2;

// 3/(2*sqrt(2)), the coefficient of the logarithmic front correction.
inline constexpr double log_coeff = 3.0 / (2.0 * sqrt2);

// Slope of the straight line used in the first/second moment counts:
// beta = sqrt(2) - (3/(2 sqrt 2)) log(t)/t + y/t.
inline double beta(double t, double y) {
    if (!(t >= 1.0)) throw std::invalid_argument("beta: t must be >= 1");
    if (!(y >= 0.0)) throw std::invalid_argument("beta: y must be >= 0");
    return sqrt2 - log_coeff * std::log(t) / t + y / t;
}

// Slope for the persistence counts: beta_t = sqrt(2) - (1/(2 sqrt 2)) log(t)/t.
inline double beta_t(double t) {
    if (!(t >= 1.0)) throw std::invalid_argument("beta_t: t must be >= 1");
    return sqrt2 - (1.0 / (2.0 * sqrt2)) * std::log(t) / t;
}

// Symmetric logarithmic curve: l(s) = (3/(2 sqrt 2)) log(s+1) for s <= t/2,
// reflected about t/2.
inline double l_curve(double s, double t) {
    if (!(s >= 0.0 && s <= t)) throw std::invalid_argument("l_curve: s must lie in [0,t]");
    const double u = std::min(s, t - s);
    return log_coeff * std::log1p(u);
}

struct CurveJet {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

// Minimum horizon for the smoothed curve; below this the smoothing window
// [t/2-1, t/2+1] sits too close to the steep part of l.
inline constexpr double smooth_t_min = 8.0;

// C^2 smoothing of l: equals l outside [t/2-1, t/2+1], symmetric about t/2,
// and with second derivative confined to [-10/t, 0] on the window.
//
// Construction on the left half-window [t/2-1, t/2], u = s - (t/2-1) in [0,1]:
//   L''(u) = -g + (g + k0) cos(2 pi u)
// where g = l'(t/2-1) = 2*log_coeff/t and k0 = l''(t/2-1) = -4*log_coeff/t^2.
// This matches l's value, slope and curvature at the window edge, integrates
// to slope 0 at t/2, and stays inside [-(4*log_coeff)/t, 0] (~ -4.24/t).
// The right half is the mirror image.
inline CurveJet L_smooth(double s, double t) {
    if (!(t >= smooth_t_min)) throw std::invalid_argument("L_smooth: t must be >= 8");
    if (!(s >= 0.0 && s <= t)) throw std::invalid_argument("L_smooth: s must lie in [0,t]");

    const double half = t / 2.0;
    const double w0 = half - 1.0;
    const bool mirrored = s > half;
    const double sl = mirrored ? t - s : s;  // position on the left half

    CurveJet jet;
    if (sl < w0) {
        jet.value = log_coeff * std::log1p(sl);
        jet.d1 = log_coeff / (sl + 1.0);
        jet.d2 = -log_coeff / ((sl + 1.0) * (sl + 1.0));
    } else {
        const double g = log_coeff / half;
        const double k0 = -log_coeff / (half * half);
        const double q = g + k0;
        const double u = sl - w0;
        const double twopi = 2.0 * std::numbers::pi;
        jet.value = log_coeff * std::log1p(w0) + g * u - 0.5 * g * u * u +
                    q / (twopi * twopi) * (1.0 - std::cos(twopi * u));
        jet.d1 = g * (1.0 - u) + q / twopi * std::sin(twopi * u);
        jet.d2 = -g + q * std::cos(twopi * u);
    }
    if (mirrored) jet.d1 = -jet.d1;
    return jet;
}

struct Window {
    double lo = 0.0;
    double hi = 0.0;

    Window() = default;
    Window(double l, double h) : lo(l), hi(h) {
        if (!(lo < hi)) throw std::invalid_argument("Window: need lo < hi");
    }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

// level(s) = slope*s + offset.
struct LinearBarrier {
    double slope = 0.0;
    double offset = 0.0;

    double level(double s) const { return slope * s + offset; }
    double d1(double) const { return slope; }
    double d2(double) const { return 0.0; }
};

// level(s) = slope*s + L(s) + y + 1 on [0, t_horizon].
struct CurvedBarrier {
    double t_horizon = 0.0;
    double y = 0.0;
    double slope = 0.0;

    CurvedBarrier(double t, double y_off)
        : t_horizon(t), y(y_off), slope(beta(t, y_off)) {
        L_smooth(0.0, t);  // validates t >= smooth_t_min
    }

    double level(double s) const { return slope * s + L_smooth(s, t_horizon).value + y + 1.0; }
    double d1(double s) const { return slope + L_smooth(s, t_horizon).d1; }
    double d2(double s) const { return L_smooth(s, t_horizon).d2; }
};

using Barrier = std::variant<LinearBarrier, CurvedBarrier>;

inline double barrier_level(const Barrier& b, double s) {
    return std::visit([s](const auto& bb) { return bb.level(s); }, b);
}

inline double barrier_d1(const Barrier& b, double s) {
    return std::visit([s](const auto& bb) { return bb.d1(s); }, b);
}

inline double barrier_d2(const Barrier& b, double s) {
    return std::visit([s](const auto& bb) { return bb.d2(s); }, b);
}

}  // namespace bbm::barriers
