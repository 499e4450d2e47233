#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bbm/rng.hpp"

namespace bbm::stats {

inline double sample_median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("sample_median: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct BootstrapCI {
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap CI (95%) for the median.
inline BootstrapCI bootstrap_median_ci(const std::vector<double>& sample, const SeedSpec& seed,
                                       int resamples = 1000) {
    if (sample.empty()) throw std::invalid_argument("bootstrap_median_ci: empty sample");
    Rng rng(seed);
    std::vector<double> medians(resamples);
    std::vector<double> draw(sample.size());
    for (int b = 0; b < resamples; ++b) {
        for (auto& x : draw)
            x = sample[static_cast<std::size_t>(rng.uniform() * sample.size()) %
                       sample.size()];
        medians[b] = sample_median(draw);
    }
    std::sort(medians.begin(), medians.end());
    const auto at = [&](double q) {
        return medians[std::min(static_cast<std::size_t>(q * resamples),
                                medians.size() - 1)];
    };
    return BootstrapCI{at(0.025), at(0.975)};
}

struct FitResult {
    double intercept = 0.0;
    double slope = 0.0;
    double intercept_se = 0.0;
    double slope_se = 0.0;
    std::vector<double> residuals;
};

// Ordinary least squares of y on (1, x); needs at least 3 points.
inline FitResult ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("ols_fit: size mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw std::invalid_argument("ols_fit: need at least 3 points");
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("ols_fit: degenerate design");
    FitResult fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.residuals.resize(n);
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        fit.residuals[i] = y[i] - fit.intercept - fit.slope * x[i];
        ssr += fit.residuals[i] * fit.residuals[i];
    }
    const double s2 = n > 2 ? ssr / static_cast<double>(n - 2) : 0.0;
    fit.slope_se = std::sqrt(s2 / sxx);
    fit.intercept_se = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
    return fit;
}

}  // namespace bbm::stats
