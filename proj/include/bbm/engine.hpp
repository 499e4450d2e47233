#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "bbm/barriers.hpp"
#include "bbm/brownian.hpp"
#include "bbm/grid.hpp"
#include "bbm/rng.hpp"

// Event-driven binary branching Brownian motion. Lifetimes are exact
// exponentials; positions are sampled at branch events exactly and, when a
// grid step is configured, at every grid time in between (grid-aligned
// storage for ancestral barrier checks). Particle labels form a binary
// genealogy (root 1, children 2v and 2v+1) and every particle consumes its
// own RNG substream keyed by its label, so a tree is reproducible per
// particle and independent of traversal order.

namespace bbm::engine {

inline constexpr std::size_t no_parent = std::numeric_limits<std::size_t>::max();

struct BbmConfig {
    double horizon = 1.0;
    double dt = 0.02;  // <= 0: sample at event times only (exact for endpoint statistics)
    std::uint64_t max_particles = 10'000'000;
    bool store_paths = true;
    double x0 = 0.0;
};

struct ParticleRecord {
    std::uint64_t label = 0;
    std::size_t parent = no_parent;
    double birth_time = 0.0;
    double end_time = 0.0;
    double birth_pos = 0.0;
    double end_pos = 0.0;
    bool branched = false;
    std::uint64_t first_grid = 0;       // grid index of grid_values[0]
    std::vector<double> grid_values;    // positions at consecutive grid times
};

struct ParticleTree {
    TimeGrid grid;
    bool has_grid = false;
    double horizon = 0.0;
    SeedSpec seed{};
    bool truncated = false;
    std::vector<ParticleRecord> records;
};

namespace detail {

struct StepInfo {
    std::uint64_t label;
    std::size_t handle;
    std::uint32_t ordinal;
    double t0, x0, t1, x1;
    std::int64_t grid_index;  // -1 when t1 is not a grid time
};

// Recorder contract:
//   std::size_t on_begin(label, parent_handle, birth_t, birth_x)
//   bool on_step(const StepInfo&)              false kills the particle
//   void on_end(label, handle, alive, t, x, branched)
template <class Recorder>
bool run_bbm(const BbmConfig& cfg, const SeedSpec& tree_seed, Recorder& rec) {
    if (!(cfg.horizon > 0.0)) throw std::invalid_argument("run_bbm: horizon must be > 0");
    if (cfg.max_particles < 1) throw std::invalid_argument("run_bbm: cap must be >= 1");

    const bool gridded = cfg.dt > 0.0;
    const TimeGrid grid = gridded ? TimeGrid::over(cfg.horizon, cfg.dt) : TimeGrid{};

    struct Pending {
        std::uint64_t label;
        std::size_t parent_handle;
        double birth_t, birth_x;
    };
    std::vector<Pending> stack;
    stack.push_back({1, no_parent, 0.0, cfg.x0});
    std::uint64_t created = 1;
    bool truncated = false;

    while (!stack.empty()) {
        const Pending p = stack.back();
        stack.pop_back();

        Rng rng(substream(tree_seed, p.label));
        const double life = rng.exponential(1.0);
        double end = p.birth_t + life;
        const bool branched = end < cfg.horizon;
        if (!branched) end = cfg.horizon;

        const std::size_t handle = rec.on_begin(p.label, p.parent_handle, p.birth_t, p.birth_x);

        double tcur = p.birth_t;
        double x = p.birth_x;
        bool alive = true;
        std::uint32_t ordinal = 0;

        auto advance = [&](double t1, std::int64_t gidx) {
            const double h = t1 - tcur;
            const double x1 = x + rng.normal(0.0, std::sqrt(h));
            const bool keep =
                rec.on_step(StepInfo{p.label, handle, ordinal, tcur, x, t1, x1, gidx});
            tcur = t1;
            x = x1;
            ++ordinal;
            return keep;
        };

        if (gridded) {
            auto j = static_cast<std::uint64_t>(std::floor(p.birth_t / grid.dt)) + 1;
            for (; alive && j <= grid.n_steps && grid.time(j) < end - 1e-12; ++j)
                alive = advance(grid.time(j), static_cast<std::int64_t>(j));
            if (alive && end > tcur) {
                // final partial step; lands on the last grid point iff the
                // particle survives to the horizon
                const std::int64_t gidx =
                    branched ? -1 : static_cast<std::int64_t>(grid.n_steps);
                alive = advance(end, gidx);
            }
        } else if (end > tcur) {
            alive = advance(end, -1);
        }

        rec.on_end(p.label, handle, alive, tcur, x, branched);

        if (alive && branched) {
            if (created + 2 > cfg.max_particles || p.label > (1ULL << 62)) {
                truncated = true;
            } else {
                created += 2;
                stack.push_back({2 * p.label, handle, end, x});
                stack.push_back({2 * p.label + 1, handle, end, x});
            }
        }
    }
    return truncated;
}

struct TreeRecorder {
    ParticleTree tree;
    bool store = true;

    std::size_t on_begin(std::uint64_t label, std::size_t parent, double birth_t,
                         double birth_x) {
        ParticleRecord r;
        r.label = label;
        r.parent = parent;
        r.birth_time = birth_t;
        r.birth_pos = birth_x;
        tree.records.push_back(std::move(r));
        return tree.records.size() - 1;
    }

    bool on_step(const StepInfo& s) {
        if (store && s.grid_index >= 0) {
            auto& r = tree.records[s.handle];
            if (r.grid_values.empty()) r.first_grid = static_cast<std::uint64_t>(s.grid_index);
            r.grid_values.push_back(s.x1);
        }
        return true;
    }

    void on_end(std::uint64_t, std::size_t handle, bool, double t, double x, bool branched) {
        auto& r = tree.records[handle];
        r.end_time = t;
        r.end_pos = x;
        r.branched = branched;
    }
};

}  // namespace detail

// Full genealogical simulation up to the horizon (or the particle cap).
inline ParticleTree simulate_bbm(const BbmConfig& cfg, const SeedSpec& seed) {
    detail::TreeRecorder rec;
    rec.store = cfg.store_paths && cfg.dt > 0.0;
    rec.tree.horizon = cfg.horizon;
    rec.tree.seed = seed;
    rec.tree.has_grid = cfg.dt > 0.0;
    if (rec.tree.has_grid) rec.tree.grid = TimeGrid::over(cfg.horizon, cfg.dt);
    rec.tree.truncated = detail::run_bbm(cfg, seed, rec);
    return rec.tree;
}

inline bool alive_at(const ParticleRecord& r, double t) {
    return r.birth_time <= t && (t < r.end_time || (t == r.end_time && !r.branched));
}

// Position of a particle at a time covered by its own segment. Requires t to
// be the birth time, the end time, or a stored grid time.
inline double position_at(const ParticleTree& tree, const ParticleRecord& r, double t) {
    if (t == r.birth_time) return r.birth_pos;
    if (t == r.end_time) return r.end_pos;
    if (!tree.has_grid) throw std::invalid_argument("position_at: tree has no grid samples");
    const double di = t / tree.grid.dt;
    const auto idx = static_cast<std::uint64_t>(std::llround(di));
    if (std::abs(di - static_cast<double>(idx)) > 1e-9)
        throw std::invalid_argument("position_at: t is not a grid time");
    if (r.grid_values.empty() || idx < r.first_grid ||
        idx >= r.first_grid + r.grid_values.size())
        throw std::invalid_argument("position_at: t not covered by stored segment");
    return r.grid_values[idx - r.first_grid];
}

inline std::uint64_t population_at(const ParticleTree& tree, double t) {
    std::uint64_t n = 0;
    for (const auto& r : tree.records) n += alive_at(r, t);
    return n;
}

// Maximum position among particles alive at t.
inline double max_at(const ParticleTree& tree, double t) {
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& r : tree.records) {
        if (!alive_at(r, t)) continue;
        best = std::max(best, position_at(tree, r, t));
        any = true;
    }
    if (!any) throw std::invalid_argument("max_at: no particles alive at t");
    return best;
}

// Streaming maxima: the front position at every grid time (when gridded)
// and at the horizon, without retaining the tree. With dt <= 0 the engine
// samples at event times only, which is exact for the horizon maximum.
struct FrontMaxima {
    std::vector<double> grid_max;  // per grid index; empty when dt <= 0
    double horizon_max = -std::numeric_limits<double>::infinity();
    std::uint64_t population = 0;  // particles alive at the horizon
    bool truncated = false;
};

namespace detail {

struct MaxRecorder {
    std::vector<double>* grid_max = nullptr;
    double horizon_max = -std::numeric_limits<double>::infinity();
    std::uint64_t population = 0;

    std::size_t on_begin(std::uint64_t, std::size_t, double, double) { return 0; }

    bool on_step(const StepInfo& s) {
        if (grid_max && s.grid_index >= 0) {
            auto& m = (*grid_max)[static_cast<std::size_t>(s.grid_index)];
            m = std::max(m, s.x1);
        }
        return true;
    }

    void on_end(std::uint64_t, std::size_t, bool, double, double x, bool branched) {
        if (!branched) {
            horizon_max = std::max(horizon_max, x);
            ++population;
        }
    }
};

}  // namespace detail

inline FrontMaxima front_maxima(const BbmConfig& cfg, const SeedSpec& seed) {
    FrontMaxima out;
    detail::MaxRecorder rec;
    if (cfg.dt > 0.0) {
        const TimeGrid grid = TimeGrid::over(cfg.horizon, cfg.dt);
        out.grid_max.assign(grid.n_points(), -std::numeric_limits<double>::infinity());
        out.grid_max[0] = cfg.x0;
        rec.grid_max = &out.grid_max;
    }
    BbmConfig c = cfg;
    c.store_paths = false;
    out.truncated = detail::run_bbm(c, seed, rec);
    out.horizon_max = rec.horizon_max;
    out.population = rec.population;
    return out;
}

struct CountSpec {
    barriers::Barrier barrier;
    barriers::Window window;
    bool bridge_correction = true;
};

namespace detail {

inline std::uint64_t bridge_key(const SeedSpec& seed, std::uint64_t label,
                                std::uint32_t ordinal) {
    return mix64(mix64(seed.master_seed, seed.stream_id) ^ mix64(label, ordinal),
                 0xb7e151628aed2a6bULL);
}

}  // namespace detail

// Number of particles alive at t whose full ancestral path stayed at or
// below the barrier at every sampled time (plus, with the bridge correction
// on, was not flagged as crossing inside any step) and whose position at t
// lies in the window. Inequalities are non-strict throughout; the path laws
// are atomless so the choice is immaterial.
inline std::uint64_t count_below_barrier(const ParticleTree& tree, const CountSpec& spec,
                                         double t) {
    if (!tree.has_grid || tree.records.empty() || !(t >= 0.0))
        throw std::invalid_argument("count_below_barrier: need a gridded tree and t >= 0");
    {
        const double di = t / tree.grid.dt;
        if (std::abs(di - std::llround(di)) > 1e-9)
            throw std::invalid_argument("count_below_barrier: t is not a grid time");
    }

    std::vector<char> ok(tree.records.size(), 1);
    std::uint64_t count = 0;
    for (std::size_t i = 0; i < tree.records.size(); ++i) {
        const auto& r = tree.records[i];
        if (r.parent != no_parent && !ok[r.parent]) {
            ok[i] = 0;
            continue;
        }
        if (r.birth_time > t) continue;  // born after the check horizon

        bool good = true;
        if (r.parent == no_parent)
            good = r.birth_pos <= barriers::barrier_level(spec.barrier, r.birth_time);

        // replay the particle's sample times, matching the engine's stepping:
        // stored grid times first, then the final event step (branch point or
        // horizon) unless the last grid sample already was the horizon
        double t0 = r.birth_time;
        double x0 = r.birth_pos;
        std::uint32_t ordinal = 0;
        bool past_window = false;
        auto check_step = [&](double t1, double x1) {
            if (t1 > t + 1e-12) {  // beyond the ancestral window [0, t]
                past_window = true;
                return false;
            }
            const double c0 = barriers::barrier_level(spec.barrier, t0);
            const double c1 = barriers::barrier_level(spec.barrier, t1);
            if (spec.bridge_correction) {
                const double p = bridge_exceeds_prob(x0, x1, t1 - t0, c0, c1);
                if (p >= 1.0 ||
                    u01_from_key(detail::bridge_key(tree.seed, r.label, ordinal)) < p)
                    good = false;
            } else if (x1 > c1) {
                good = false;
            }
            t0 = t1;
            x0 = x1;
            ++ordinal;
            return good;
        };
        for (std::size_t gi = 0; gi < r.grid_values.size(); ++gi) {
            if (!check_step(tree.grid.time(r.first_grid + gi), r.grid_values[gi])) break;
        }
        if (good && !past_window && r.end_time > t0) check_step(r.end_time, r.end_pos);

        ok[i] = good ? 1 : 0;
        if (good && alive_at(r, t) && spec.window.contains(position_at(tree, r, t))) ++count;
    }
    return count;
}

// ---------------------------------------------------------------------------
// Pruned direct counting.
//
// The population below a line of slope ~ sqrt(2) grows like e^t, which makes
// full trees unusable beyond t ~ 12. The endpoint-window counts only involve
// particles whose whole ancestry stays below the barrier, so crossers (and
// all their descendants) can be killed exactly. Particles deeper than
// band_delta below every active barrier are killed too. That truncation is
// NOT exact: depth-d particles contribute to the front counts with weight
// ~ exp(-d^2/2t), so the relative bias is O(e^{-band_delta^2/2t}) (a few
// percent at band_delta = 8, t = 20) while the cost grows like
// e^{beta*band_delta}. Use the pruned counter for nonemptiness
// probabilities, where tolerances are factor-scale; use full trees where an
// unbiased moment is required and e^t permits.
// ---------------------------------------------------------------------------

struct PrunedBarrier {
    double slope = 0.0;      // barrier level(s) = slope*s + intercept
    double intercept = 1.0;
    double t_check = 0.0;    // time of the endpoint window (grid-aligned)
    barriers::Window window; // window for the count at t_check
};

struct PrunedCounts {
    std::vector<std::uint32_t> counts;  // in-window survivors per barrier
    bool truncated = false;
};

namespace detail {

struct PrunedRecorder {
    const std::vector<PrunedBarrier>* specs;
    SeedSpec seed;
    bool bridge_correction = true;
    double band_delta = 8.0;
    TimeGrid grid;
    std::vector<std::uint32_t> counts;
    std::vector<std::uint64_t> check_index;           // grid index of each t_check
    std::unordered_map<std::uint64_t, std::uint64_t> child_mask;
    std::uint64_t root_mask = 0;
    std::uint64_t current_mask = 0;

    std::size_t on_begin(std::uint64_t label, std::size_t, double, double) {
        if (label == 1) {
            current_mask = root_mask;
        } else {
            const auto it = child_mask.find(label);
            current_mask = it->second;
            child_mask.erase(it);
        }
        return 0;
    }

    bool on_step(const StepInfo& s) {
        double u = -1.0;  // one uniform per step, shared across barriers
        double min_level = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < specs->size(); ++j) {
            const std::uint64_t bit = 1ULL << j;
            if (!(current_mask & bit)) continue;
            const auto& b = (*specs)[j];
            const double c1 = b.slope * s.t1 + b.intercept;
            bool crossed;
            if (bridge_correction) {
                const double p = bridge_exceeds_prob(s.x0, s.x1, s.t1 - s.t0,
                                                     b.slope * s.t0 + b.intercept, c1);
                if (p >= 1.0) {
                    crossed = true;
                } else {
                    if (u < 0.0) u = u01_from_key(bridge_key(seed, s.label, s.ordinal));
                    crossed = u < p;
                }
            } else {
                crossed = s.x1 > c1;
            }
            if (crossed) {
                current_mask &= ~bit;
                continue;
            }
            if (s.grid_index >= 0 &&
                static_cast<std::uint64_t>(s.grid_index) == check_index[j]) {
                if (b.window.contains(s.x1)) ++counts[j];
                current_mask &= ~bit;  // this barrier is settled for the subtree
                continue;
            }
            min_level = std::min(min_level, c1);
        }
        if (current_mask && s.x1 < min_level - band_delta) current_mask = 0;
        return current_mask != 0;
    }

    void on_end(std::uint64_t label, std::size_t, bool alive, double, double, bool branched) {
        if (alive && branched) {
            child_mask[2 * label] = current_mask;
            child_mask[2 * label + 1] = current_mask;
        }
    }
};

}  // namespace detail

// One replicate of the pruned simulation: simulates up to max(t_check) and
// returns, per barrier, the number of particles alive at its t_check whose
// ancestry stayed below that barrier and whose position lies in its window.
// Distributionally identical to count_below_barrier on a full tree, up to
// the band truncation described above.
inline PrunedCounts pruned_barrier_counts(const std::vector<PrunedBarrier>& specs, double dt,
                                          const SeedSpec& seed, bool bridge_correction = true,
                                          double band_delta = 8.0,
                                          std::uint64_t max_particles = 10'000'000) {
    if (specs.empty() || specs.size() > 64)
        throw std::invalid_argument("pruned_barrier_counts: need 1..64 barriers");
    double horizon = 0.0;
    for (const auto& b : specs) horizon = std::max(horizon, b.t_check);

    BbmConfig cfg;
    cfg.horizon = horizon;
    cfg.dt = dt;
    cfg.max_particles = max_particles;
    cfg.store_paths = false;

    detail::PrunedRecorder rec;
    rec.specs = &specs;
    rec.seed = seed;
    rec.bridge_correction = bridge_correction;
    rec.band_delta = band_delta;
    rec.grid = TimeGrid::over(horizon, dt);
    rec.counts.assign(specs.size(), 0);
    rec.root_mask = specs.size() == 64 ? ~0ULL : (1ULL << specs.size()) - 1;
    for (const auto& b : specs) {
        const double di = b.t_check / rec.grid.dt;
        const auto idx = static_cast<std::uint64_t>(std::llround(di));
        if (std::abs(di - static_cast<double>(idx)) > 1e-9)
            throw std::invalid_argument("pruned_barrier_counts: t_check must be grid-aligned");
        rec.check_index.push_back(idx);
    }

    PrunedCounts out;
    out.truncated = detail::run_bbm(cfg, seed, rec);
    out.counts = std::move(rec.counts);
    return out;
}

}  // namespace bbm::engine
