// Command-line front end: runs the Monte Carlo experiments, writes the
// JSON/CSV reports, and exposes the selftest battery and a debug tree dump.
//
// Exit codes: 0 success, 1 experiment failure (discard rate, degenerate
// estimate), 2 configuration / usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bbm/engine.hpp"
#include "bbm/experiments.hpp"
#include "bbm/selftest.hpp"
#include "bbm/version.hpp"

namespace {

struct CliOptions {
    bbm::experiments::ExperimentConfig cfg;
    std::string config_path;
};

void add_experiment_flags(CLI::App* sub, CliOptions& opt, bool& no_bridge) {
    sub->add_option("--config", opt.config_path, "JSON config file (flags override it)");
    sub->add_option("--t", opt.cfg.t_grid, "time grid (comma separated)")->delimiter(',');
    sub->add_option("--y", opt.cfg.y_grid, "offset grid (comma separated)")->delimiter(',');
    sub->add_option("--reps", opt.cfg.replicates, "replicates / Monte Carlo draws");
    sub->add_option("--dt", opt.cfg.dt, "time-grid step");
    sub->add_option("--seed", opt.cfg.master_seed, "master seed");
    sub->add_option("--out", opt.cfg.out_path, "output stem or .json path");
    sub->add_option("--jobs", opt.cfg.jobs, "worker threads");
    sub->add_option("--caps", opt.cfg.caps, "particle cap per tree");
    sub->add_option("--lattice", opt.cfg.lattice, "lattice spacing");
    sub->add_option("--i-windows", opt.cfg.i_windows, "persistence occupation windows n")
        ->delimiter(',');
    sub->add_option("--band-delta", opt.cfg.band_delta, "pruning depth below the barrier");
    sub->add_option("--t-lo", opt.cfg.t_lo, "fluctuation window start");
    sub->add_flag("--no-bridge-correction", no_bridge,
                  "disable the in-step bridge crossing correction");
}

int run_experiment_command(CLI::App* sub, CliOptions& opt, bool no_bridge,
                           const std::string& name) {
    bbm::experiments::ExperimentConfig cfg;
    if (!opt.config_path.empty()) {
        std::ifstream in(opt.config_path);
        if (!in) {
            std::fprintf(stderr, "error: cannot read config file %s\n",
                         opt.config_path.c_str());
            return 2;
        }
        try {
            nlohmann::json j;
            in >> j;
            cfg = j.get<bbm::experiments::ExperimentConfig>();
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: bad config file: %s\n", e.what());
            return 2;
        }
    }
    // flags override file values
    if (sub->count("--t")) cfg.t_grid = opt.cfg.t_grid;
    if (sub->count("--y")) cfg.y_grid = opt.cfg.y_grid;
    if (sub->count("--reps")) cfg.replicates = opt.cfg.replicates;
    if (sub->count("--dt")) cfg.dt = opt.cfg.dt;
    if (sub->count("--seed")) cfg.master_seed = opt.cfg.master_seed;
    if (sub->count("--out")) cfg.out_path = opt.cfg.out_path;
    if (sub->count("--jobs")) cfg.jobs = opt.cfg.jobs;
    if (sub->count("--caps")) cfg.caps = opt.cfg.caps;
    if (sub->count("--lattice")) cfg.lattice = opt.cfg.lattice;
    if (sub->count("--i-windows")) cfg.i_windows = opt.cfg.i_windows;
    if (sub->count("--band-delta")) cfg.band_delta = opt.cfg.band_delta;
    if (sub->count("--t-lo")) cfg.t_lo = opt.cfg.t_lo;
    if (no_bridge) cfg.bridge_correction = false;
    cfg.experiment = name;
    if (cfg.jobs == 0) cfg.jobs = std::max(1u, std::thread::hardware_concurrency());

    try {
        const auto report = bbm::experiments::run_experiment(cfg);
        bbm::experiments::write_report(report, cfg.out_path);
        std::printf("%s: wrote %s.json / .csv (%.1f s)\n", name.c_str(),
                    cfg.out_path.c_str(), report["wall_clock_seconds"].get<double>());
        if (report.contains("fit") && !report["fit"].is_null())
            std::printf("  fit: intercept=%.4f slope=%.4f (se %.4f)\n",
                        report["fit"]["intercept"].get<double>(),
                        report["fit"]["slope"].get<double>(),
                        report["fit"]["slope_se"].get<double>());
        return 0;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "experiment failed: %s\n", e.what());
        return 1;
    }
}

int dump_tree(double horizon, double dt, std::uint64_t seed, std::uint64_t cap,
              const std::string& out) {
    try {
        bbm::engine::BbmConfig cfg;
        cfg.horizon = horizon;
        cfg.dt = dt;
        cfg.max_particles = cap;
        const auto tree = bbm::engine::simulate_bbm(cfg, bbm::SeedSpec{seed, 0});
        std::ofstream file;
        std::ostream* os = &std::cout;
        if (!out.empty()) {
            file.open(out);
            if (!file) {
                std::fprintf(stderr, "error: cannot write %s\n", out.c_str());
                return 2;
            }
            os = &file;
        }
        for (const auto& r : tree.records) {
            nlohmann::json row{{"id", r.label},
                               {"parent", r.label == 1 ? 0 : r.label / 2},
                               {"birth", r.birth_time},
                               {"end", r.end_time},
                               {"birth_pos", r.birth_pos},
                               {"end_pos", r.end_pos},
                               {"branched", r.branched},
                               {"positions", r.grid_values}};
            *os << row.dump() << '\n';
        }
        std::fprintf(stderr, "dumped %zu records (truncated=%d)\n", tree.records.size(),
                     tree.truncated ? 1 : 0);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"branching Brownian motion front toolkit"};
    app.set_version_flag("--version", bbm::version_string);
    app.require_subcommand(1);

    CliOptions opt;
    bool no_bridge = false;
    const std::vector<std::string> experiments = {"median", "tail", "persistence",
                                                  "fluctuation", "lemmas"};
    std::vector<CLI::App*> subs;
    for (const auto& name : experiments) {
        auto* sub = app.add_subcommand(name, name + " experiment");
        add_experiment_flags(sub, opt, no_bridge);
        subs.push_back(sub);
    }

    auto* self = app.add_subcommand("selftest", "run the invariant battery");
    std::uint64_t self_seed = 20240901;
    self->add_option("--seed", self_seed, "selftest seed");

    auto* dump = app.add_subcommand("dump-tree", "debug dump of one tree as NDJSON");
    double dump_t = 2.0, dump_dt = 0.02;
    std::uint64_t dump_seed = 1, dump_cap = 10'000'000;
    std::string dump_out;
    dump->add_option("--t", dump_t, "horizon");
    dump->add_option("--dt", dump_dt, "grid step");
    dump->add_option("--seed", dump_seed, "seed");
    dump->add_option("--caps", dump_cap, "particle cap");
    dump->add_option("--out", dump_out, "output path (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (self->parsed())
        return bbm::selftest::report(bbm::selftest::run_all(self_seed)) ? 0 : 1;
    if (dump->parsed()) return dump_tree(dump_t, dump_dt, dump_seed, dump_cap, dump_out);

    for (std::size_t i = 0; i < subs.size(); ++i)
        if (subs[i]->parsed())
            return run_experiment_command(subs[i], opt, no_bridge, experiments[i]);
    return 2;
}
