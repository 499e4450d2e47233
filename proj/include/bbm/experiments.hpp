#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bbm/barriers.hpp"
#include "bbm/bessel.hpp"
#include "bbm/engine.hpp"
#include "bbm/rng.hpp"
#include "bbm/spine.hpp"
#include "bbm/stats.hpp"
#include "bbm/version.hpp"

// Experiment harness: reproducible Monte Carlo studies of the front median,
// the exceedance tail, the persistence counts, the almost-sure fluctuation
// trajectory, and the coupled-pair functional sweeps. Every replicate draws
// from a stream keyed by (experiment, point, replicate index), so reports
// are byte-identical across reruns and independent of the worker count.

namespace bbm::experiments {

using nlohmann::json;

struct ExperimentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string experiment;
    std::vector<double> t_grid;
    std::vector<double> y_grid;
    std::uint64_t replicates = 0;  // 0: per-experiment default
    double dt = 0.0;               // 0: per-experiment default
    std::uint64_t caps = 10'000'000;
    std::uint64_t master_seed = 1;
    bool bridge_correction = true;
    std::string out_path = "report";
    unsigned jobs = 1;
    double lattice = 0.25;               // fluctuation / persistence lattice spacing
    std::vector<double> i_windows{5.0};  // persistence: n values for the [n,2n] study
    double band_delta = 8.0;             // pruning depth for direct barrier counts
    double t_lo = 6.0;                   // fluctuation window start
};

inline void to_json(json& j, const ExperimentConfig& c) {
    j = json{{"experiment", c.experiment},
             {"t_grid", c.t_grid},
             {"y_grid", c.y_grid},
             {"replicates", c.replicates},
             {"dt", c.dt},
             {"caps", c.caps},
             {"master_seed", c.master_seed},
             {"bridge_correction", c.bridge_correction},
             {"out_path", c.out_path},
             {"jobs", c.jobs},
             {"lattice", c.lattice},
             {"i_windows", c.i_windows},
             {"band_delta", c.band_delta},
             {"t_lo", c.t_lo}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
    c.experiment = j.value("experiment", c.experiment);
    c.t_grid = j.value("t_grid", c.t_grid);
    c.y_grid = j.value("y_grid", c.y_grid);
    c.replicates = j.value("replicates", c.replicates);
    c.dt = j.value("dt", c.dt);
    c.caps = j.value("caps", c.caps);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.bridge_correction = j.value("bridge_correction", c.bridge_correction);
    c.out_path = j.value("out_path", c.out_path);
    c.jobs = j.value("jobs", c.jobs);
    c.lattice = j.value("lattice", c.lattice);
    c.i_windows = j.value("i_windows", c.i_windows);
    c.band_delta = j.value("band_delta", c.band_delta);
    c.t_lo = j.value("t_lo", c.t_lo);
}

template <class Fn>
void parallel_for(std::uint64_t n, unsigned jobs, Fn&& fn) {
    if (jobs <= 1) {
        for (std::uint64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w)
        pool.emplace_back([&] {
            try {
                for (std::uint64_t i; (i = next.fetch_add(1)) < n;) fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

namespace detail {

inline std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline SeedSpec point_stream(const ExperimentConfig& cfg, const std::string& point,
                             std::uint64_t r) {
    return SeedSpec{cfg.master_seed, stream_for(cfg.experiment + "/" + point, r)};
}

inline json base_report(const ExperimentConfig& cfg) {
    json rep;
    rep["experiment"] = cfg.experiment;
    rep["config"] = cfg;
    rep["library_version"] = version_string;
    rep["seed_manifest"] = {
        {"master_seed", cfg.master_seed},
        {"replicate_streams", "stream_for(\"<experiment>/<point>\", replicate)"}};
    rep["points"] = json::array();
    return rep;
}

inline void check_discards(std::uint64_t discarded, std::uint64_t total) {
    const double rate = total ? static_cast<double>(discarded) / total : 0.0;
    if (rate > 0.01)
        throw ExperimentError("discard rate " + fmt_g(rate) +
                              " exceeds 1% (raise caps or lower the horizon)");
}

// median of M_t minus sqrt(2) t against log t
inline constexpr const char* median_design = "median(M_t) - sqrt(2) t ~ a + b log t";

}  // namespace detail

// Median experiment: empirical median of the front M_t per horizon with a
// bootstrap CI, then an OLS fit of median(M_t) - sqrt(2) t against log t.
inline json run_median_experiment(ExperimentConfig cfg) {
    cfg.experiment = "median";
    if (cfg.t_grid.empty()) cfg.t_grid = {4, 5, 6, 7, 8, 9, 10};
    if (cfg.replicates == 0) cfg.replicates = 2000;
    if (cfg.dt <= 0.0) cfg.dt = 0.02;

    json rep = detail::base_report(cfg);
    std::vector<double> xs, ys;
    std::uint64_t discarded = 0, total = 0;

    for (double t : cfg.t_grid) {
        const std::string point = "t=" + detail::fmt_g(t);
        std::vector<double> maxima(cfg.replicates,
                                   std::numeric_limits<double>::quiet_NaN());
        parallel_for(cfg.replicates, cfg.jobs, [&](std::uint64_t r) {
            engine::BbmConfig bc;
            bc.horizon = t;
            bc.dt = cfg.dt;
            bc.max_particles = cfg.caps;
            const auto fm = engine::front_maxima(bc, detail::point_stream(cfg, point, r));
            if (!fm.truncated) maxima[r] = fm.horizon_max;
        });
        std::vector<double> valid;
        valid.reserve(maxima.size());
        for (double m : maxima)
            if (std::isfinite(m)) valid.push_back(m);
        discarded += cfg.replicates - valid.size();
        total += cfg.replicates;
        if (valid.empty()) throw ExperimentError("median: all replicates truncated");

        const double med = stats::sample_median(valid);
        const auto ci = stats::bootstrap_median_ci(
            valid, detail::point_stream(cfg, point + "/bootstrap", 0));
        const double centered = med - barriers::sqrt2 * t;
        rep["points"].push_back({{"experiment", "median"},
                                 {"t", t},
                                 {"y", nullptr},
                                 {"estimate", centered},
                                 {"stderr", 0.5 * (ci.hi - ci.lo) / 1.96},
                                 {"n", valid.size()},
                                 {"median_M", med},
                                 {"ci_lo", ci.lo - barriers::sqrt2 * t},
                                 {"ci_hi", ci.hi - barriers::sqrt2 * t}});
        xs.push_back(std::log(t));
        ys.push_back(centered);
    }

    detail::check_discards(discarded, total);
    rep["discard_rate"] = total ? static_cast<double>(discarded) / total : 0.0;
    if (xs.size() >= 3) {
        const auto fit = stats::ols_fit(xs, ys);
        rep["fit"] = {{"design", detail::median_design},
                      {"intercept", fit.intercept},
                      {"slope", fit.slope},
                      {"intercept_se", fit.intercept_se},
                      {"slope_se", fit.slope_se},
                      {"residuals", fit.residuals}};
    } else {
        rep["fit"] = nullptr;
        rep["fit_note"] = "fit skipped: need at least 3 grid points";
    }
    return rep;
}

// Tail experiment: exceedance frequencies of M_t over the recentred levels
// sqrt(2) t - (3/(2 sqrt 2)) log t + y. The horizon maximum is sampled at
// event times, which is exact for its law, so dt plays no role here. One
// replicate pool per t serves every y.
inline json run_tail_experiment(ExperimentConfig cfg) {
    cfg.experiment = "tail";
    if (cfg.t_grid.empty()) cfg.t_grid = {10};
    if (cfg.y_grid.empty()) cfg.y_grid = {0, 1, 2, 3};
    if (cfg.replicates == 0) cfg.replicates = 20000;

    json rep = detail::base_report(cfg);
    std::uint64_t discarded = 0, total = 0;
    for (double t : cfg.t_grid) {
        for (double y : cfg.y_grid)
            if (!(y >= 0.0 && y <= std::sqrt(t)))
                throw ExperimentError("tail: y grid must lie in [0, sqrt(t)]");
        const std::string point = "t=" + detail::fmt_g(t);
        std::vector<double> maxima(cfg.replicates,
                                   std::numeric_limits<double>::quiet_NaN());
        parallel_for(cfg.replicates, cfg.jobs, [&](std::uint64_t r) {
            engine::BbmConfig bc;
            bc.horizon = t;
            bc.dt = 0.0;  // event-time sampling
            bc.max_particles = cfg.caps;
            const auto fm = engine::front_maxima(bc, detail::point_stream(cfg, point, r));
            if (!fm.truncated) maxima[r] = fm.horizon_max;
        });
        std::vector<double> valid;
        for (double m : maxima)
            if (std::isfinite(m)) valid.push_back(m);
        discarded += cfg.replicates - valid.size();
        total += cfg.replicates;
        if (valid.empty()) throw ExperimentError("tail: all replicates truncated");

        const double recentred = barriers::sqrt2 * t - barriers::log_coeff * std::log(t);
        std::vector<double> fit_y, fit_logf;
        json zero_cells = json::array();
        for (double y : cfg.y_grid) {
            std::uint64_t hits = 0;
            for (double m : valid) hits += (m > recentred + y);
            const double p = static_cast<double>(hits) / valid.size();
            const double se = std::sqrt(p * (1.0 - p) / valid.size());
            rep["points"].push_back({{"experiment", "tail"},
                                     {"t", t},
                                     {"y", y},
                                     {"estimate", p},
                                     {"stderr", se},
                                     {"n", valid.size()},
                                     {"threshold", recentred + y}});
            if (hits > 0) {
                fit_y.push_back(y);
                fit_logf.push_back(std::log(p));
            } else {
                zero_cells.push_back(y);
            }
        }
        json fit = nullptr;
        if (fit_y.size() >= 3) {
            const auto f = stats::ols_fit(fit_y, fit_logf);
            fit = {{"design", "log freq ~ a + b y"},
                   {"intercept", f.intercept},
                   {"slope", f.slope},
                   {"intercept_se", f.intercept_se},
                   {"slope_se", f.slope_se},
                   {"residuals", f.residuals}};
        }
        if (!rep.contains("fit")) rep["fit"] = fit;  // first t is the headline fit
        rep["fits_by_t"][point] = fit;
        rep["zero_cells"][point] = zero_cells;
    }
    detail::check_discards(discarded, total);
    rep["discard_rate"] = total ? static_cast<double>(discarded) / total : 0.0;
    return rep;
}

// Persistence experiment: P(V(t) != 0) per horizon via the pruned direct
// count below the slope-beta_t line, plus the discretized occupation study
// on [n, 2n] per requested n.
inline json run_persistence_experiment(ExperimentConfig cfg) {
    cfg.experiment = "persistence";
    if (cfg.t_grid.empty()) cfg.t_grid = {5, 10, 20};
    if (cfg.replicates == 0) cfg.replicates = 4000;
    if (cfg.dt <= 0.0) cfg.dt = 0.02;

    json rep = detail::base_report(cfg);
    std::uint64_t discarded = 0, total = 0;

    for (double t : cfg.t_grid) {
        const std::string point = "t=" + detail::fmt_g(t);
        const double slope = barriers::beta_t(t);
        const std::vector<engine::PrunedBarrier> specs{
            {slope, 1.0, t, barriers::Window{slope * t - 1.0, slope * t}}};
        std::vector<signed char> found(cfg.replicates, -1);
        parallel_for(cfg.replicates, cfg.jobs, [&](std::uint64_t r) {
            const auto pc = engine::pruned_barrier_counts(
                specs, cfg.dt, detail::point_stream(cfg, point, r), cfg.bridge_correction,
                cfg.band_delta, cfg.caps);
            if (!pc.truncated) found[r] = pc.counts[0] > 0 ? 1 : 0;
        });
        std::uint64_t hits = 0, valid = 0;
        for (signed char f : found)
            if (f >= 0) {
                ++valid;
                hits += f;
            }
        discarded += cfg.replicates - valid;
        total += cfg.replicates;
        if (valid == 0) throw ExperimentError("persistence: all replicates truncated");
        const double p = static_cast<double>(hits) / valid;
        const double se = std::sqrt(p * (1.0 - p) / valid);
        rep["points"].push_back({{"experiment", "persistence"},
                                 {"t", t},
                                 {"y", nullptr},
                                 {"estimate", p},
                                 {"stderr", se},
                                 {"n", valid},
                                 {"t_times_p", t * p},
                                 {"t_times_p_se", t * se},
                                 {"ci_lo", p - 1.96 * se},
                                 {"ci_hi", p + 1.96 * se}});
    }

    // occupation study: fraction of lattice times in [n, 2n] with V != 0
    for (double nwin : cfg.i_windows) {
        const std::string point = "I_n=" + detail::fmt_g(nwin);
        const double lat = std::max(cfg.dt, std::round(cfg.lattice / cfg.dt) * cfg.dt);
        std::vector<engine::PrunedBarrier> specs;
        for (double tj = nwin; tj <= 2.0 * nwin + 1e-9; tj += lat) {
            const double slope = barriers::beta_t(tj);
            specs.push_back(
                {slope, 1.0, tj, barriers::Window{slope * tj - 1.0, slope * tj}});
        }
        if (specs.size() > 64)
            throw ExperimentError("persistence: too many lattice times; coarsen lattice");
        std::vector<double> occ(cfg.replicates, std::numeric_limits<double>::quiet_NaN());
        parallel_for(cfg.replicates, cfg.jobs, [&](std::uint64_t r) {
            const auto pc = engine::pruned_barrier_counts(
                specs, cfg.dt, detail::point_stream(cfg, point, r), cfg.bridge_correction,
                cfg.band_delta, cfg.caps);
            if (pc.truncated) return;
            std::uint64_t k = 0;
            for (auto c : pc.counts) k += c > 0;
            occ[r] = nwin * static_cast<double>(k) / static_cast<double>(pc.counts.size());
        });
        Accumulator acc;
        for (double v : occ)
            if (std::isfinite(v)) acc.add(v);
        discarded += cfg.replicates - acc.count();
        total += cfg.replicates;
        rep["points"].push_back({{"experiment", "persistence/I_n"},
                                 {"t", nwin},
                                 {"y", nullptr},
                                 {"estimate", acc.mean()},
                                 {"stderr", acc.std_error()},
                                 {"n", acc.count()},
                                 {"lattice", lat},
                                 {"lattice_points", specs.size()}});
    }

    detail::check_discards(discarded, total);
    rep["discard_rate"] = total ? static_cast<double>(discarded) / total : 0.0;
    return rep;
}

// Fluctuation experiment: per replicate the trajectory
// r(t) = (M_t - sqrt(2) t)/log t on lattice times in [t_lo, horizon], reduced
// to its min and max; cross-replicate medians summarize the oscillation.
inline json run_fluctuation_experiment(ExperimentConfig cfg) {
    cfg.experiment = "fluctuation";
    if (cfg.t_grid.empty()) cfg.t_grid = {6, 12};
    if (cfg.replicates == 0) cfg.replicates = 50;
    const double horizon = cfg.t_grid.back();
    const double t_lo = cfg.t_grid.size() > 1 ? cfg.t_grid.front() : cfg.t_lo;
    if (!(horizon >= 6.0)) throw ExperimentError("fluctuation: horizon must be >= 6");
    if (!(t_lo > 1.0 && t_lo < horizon))
        throw ExperimentError("fluctuation: window start must lie in (1, horizon)");

    json rep = detail::base_report(cfg);
    const TimeGrid grid = TimeGrid::over(horizon, cfg.lattice);
    std::vector<std::uint64_t> watch;
    for (std::uint64_t i = 0; i <= grid.n_steps; ++i)
        if (grid.time(i) >= t_lo - 1e-9) watch.push_back(i);

    std::vector<double> min_r(cfg.replicates, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> max_r(cfg.replicates, std::numeric_limits<double>::quiet_NaN());
    parallel_for(cfg.replicates, cfg.jobs, [&](std::uint64_t r) {
        engine::BbmConfig bc;
        bc.horizon = horizon;
        bc.dt = grid.dt;
        bc.max_particles = cfg.caps;
        const auto fm = engine::front_maxima(bc, detail::point_stream(cfg, "traj", r));
        if (fm.truncated) return;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (auto i : watch) {
            const double s = grid.time(i);
            const double rv = (fm.grid_max[i] - barriers::sqrt2 * s) / std::log(s);
            lo = std::min(lo, rv);
            hi = std::max(hi, rv);
        }
        min_r[r] = lo;
        max_r[r] = hi;
    });

    std::vector<double> mins, maxs;
    std::uint64_t gaps = 0;
    for (std::uint64_t r = 0; r < cfg.replicates; ++r) {
        if (!std::isfinite(min_r[r])) continue;
        mins.push_back(min_r[r]);
        maxs.push_back(max_r[r]);
        gaps += (max_r[r] - min_r[r]) > 0.2;
        rep["points"].push_back({{"experiment", "fluctuation/min_r"},
                                 {"t", static_cast<double>(r)},
                                 {"y", nullptr},
                                 {"estimate", min_r[r]},
                                 {"stderr", 0.0},
                                 {"n", 1}});
        rep["points"].push_back({{"experiment", "fluctuation/max_r"},
                                 {"t", static_cast<double>(r)},
                                 {"y", nullptr},
                                 {"estimate", max_r[r]},
                                 {"stderr", 0.0},
                                 {"n", 1}});
    }
    detail::check_discards(cfg.replicates - mins.size(), cfg.replicates);
    if (mins.empty()) throw ExperimentError("fluctuation: all replicates truncated");
    rep["discard_rate"] =
        static_cast<double>(cfg.replicates - mins.size()) / cfg.replicates;
    rep["summary"] = {{"median_min_r", stats::sample_median(mins)},
                      {"median_max_r", stats::sample_median(maxs)},
                      {"replicates_with_gap_above_0.2", gaps},
                      {"valid_replicates", mins.size()},
                      {"window", {t_lo, horizon}},
                      {"lattice", grid.dt}};
    return rep;
}

// Coupled-pair functional sweeps: t^3-scaled first functional across the t
// grid, and the second functional against its two-term bound shape.
inline json run_lemma_sweeps(ExperimentConfig cfg) {
    cfg.experiment = "lemmas";
    if (cfg.t_grid.empty()) cfg.t_grid = {5, 10, 20, 40};
    if (cfg.replicates == 0) cfg.replicates = 1'000'000;
    if (cfg.dt <= 0.0) cfg.dt = 0.01;

    json rep = detail::base_report(cfg);
    double lo22 = std::numeric_limits<double>::infinity(), hi22 = -lo22;
    for (double t : cfg.t_grid) {
        const auto est = bessel::lemma22_functional_estimate(
            t, 0.0, cfg.replicates, detail::point_stream(cfg, "l22/t=" + detail::fmt_g(t), 0),
            cfg.dt);
        const double scaled = t * t * t * est.mean;
        lo22 = std::min(lo22, scaled);
        hi22 = std::max(hi22, scaled);
        rep["points"].push_back({{"experiment", "lemmas/l22"},
                                 {"t", t},
                                 {"y", 0.0},
                                 {"estimate", est.mean},
                                 {"stderr", est.std_error},
                                 {"n", est.n},
                                 {"t3_scaled", scaled},
                                 {"t3_scaled_se", t * t * t * est.std_error}});
    }

    auto bound_shape = [](double s, double t) {
        return std::exp(-0.5 * std::log(t) / t * s) *
               (std::pow(t, -2.5) +
                std::pow(t, -1.5) * std::pow(t - s + 1.0, -1.5));
    };
    for (double t : cfg.t_grid) {
        for (const auto& [name, s] : {std::pair<const char*, double>{"s_eq_t", t},
                                      {"t_eq_2s", t / 2.0}}) {
            if (s < std::numbers::e) continue;
            const bessel::Lemma23Params params(s, t);
            const auto est = bessel::lemma23_functional_estimate(
                params, cfg.replicates,
                detail::point_stream(cfg, std::string("l23/") + name + "/t=" +
                                              detail::fmt_g(t), 0),
                cfg.dt);
            const double shape = bound_shape(s, t);
            rep["points"].push_back({{"experiment", std::string("lemmas/l23/") + name},
                                     {"t", t},
                                     {"y", nullptr},
                                     {"estimate", est.mean},
                                     {"stderr", est.std_error},
                                     {"n", est.n},
                                     {"s", s},
                                     {"a_st", params.a_st},
                                     {"bound_shape", shape},
                                     {"ratio_to_shape", est.mean / shape}});
        }
    }
    rep["summary"] = {{"l22_t3_min", lo22},
                      {"l22_t3_max", hi22},
                      {"l22_stability", hi22 / lo22}};
    rep["discard_rate"] = 0.0;
    return rep;
}

inline json run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    json rep;
    if (cfg.experiment == "median")
        rep = run_median_experiment(cfg);
    else if (cfg.experiment == "tail")
        rep = run_tail_experiment(cfg);
    else if (cfg.experiment == "persistence")
        rep = run_persistence_experiment(cfg);
    else if (cfg.experiment == "fluctuation")
        rep = run_fluctuation_experiment(cfg);
    else if (cfg.experiment == "lemmas")
        rep = run_lemma_sweeps(cfg);
    else
        throw std::invalid_argument("unknown experiment: " + cfg.experiment);
    const auto t1 = std::chrono::steady_clock::now();
    rep["wall_clock_seconds"] = std::chrono::duration<double>(t1 - t0).count();
    return rep;
}

// Writes <stem>.json and the flat <stem>.csv with 17 significant digits.
inline void write_report(const json& rep, const std::string& out_path) {
    std::string stem = out_path;
    if (stem.size() > 5 && stem.substr(stem.size() - 5) == ".json")
        stem = stem.substr(0, stem.size() - 5);

    {
        std::ofstream jf(stem + ".json");
        if (!jf) throw ExperimentError("cannot write " + stem + ".json");
        jf << rep.dump(2) << '\n';
    }
    std::ofstream cf(stem + ".csv");
    if (!cf) throw ExperimentError("cannot write " + stem + ".csv");
    cf << "experiment,t,y,estimate,stderr,n\n";
    char buf[64];
    auto num = [&](const json& row, const char* key) -> std::string {
        if (!row.contains(key) || row[key].is_null()) return "";
        std::snprintf(buf, sizeof buf, "%.17g", row[key].get<double>());
        return buf;
    };
    for (const auto& row : rep["points"]) {
        cf << row["experiment"].get<std::string>() << ',' << num(row, "t") << ','
           << num(row, "y") << ',' << num(row, "estimate") << ',' << num(row, "stderr")
           << ',' << row["n"].get<std::uint64_t>() << '\n';
    }
}

}  // namespace bbm::experiments
