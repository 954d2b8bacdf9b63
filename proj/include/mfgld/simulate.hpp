// Seeded N-particle simulation of the interacting dynamics, empirical
// measures, the pathwise pushforward check, and Monte Carlo estimators for
// deviation probabilities, decay slopes, and LLN error curves.
//
// Every variate is a pure function of (seed, replication, particle, time,
// role); replications are independent work units reduced in replication
// order, so results are bit-identical across runs and worker counts.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <thread>
#include <vector>

#include "mfgld/core.hpp"
#include "mfgld/model.hpp"
#include "mfgld/noise.hpp"

namespace mfgld {

enum class Variant { OwnState, Ancestor };

inline const char* variant_name(Variant v) { return v == Variant::OwnState ? "own" : "ancestor"; }

struct EmpiricalFlow {
    std::size_t particles = 0;
    std::vector<std::vector<std::uint32_t>> counts;  // [t][e], each slice sums to particles

    Dist dist_at(std::size_t t) const {
        std::vector<double> w(counts[t].size());
        for (std::size_t e = 0; e < w.size(); ++e)
            w[e] = static_cast<double>(counts[t][e]) / static_cast<double>(particles);
        return Dist(std::move(w));
    }

    double l1_to(std::size_t t, const Dist& target) const {
        double d = 0.0;
        for (std::size_t e = 0; e < counts[t].size(); ++e)
            d += std::abs(static_cast<double>(counts[t][e]) / static_cast<double>(particles) - target[e]);
        return d;
    }
};

struct EnsembleTrace {
    std::size_t particles = 0;
    std::size_t horizon = 0;  // recorded times are 0..horizon
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;
    Variant variant = Variant::OwnState;
    std::vector<std::uint32_t> states;        // [i * (horizon+1) + t]
    std::vector<std::uint32_t> actions;
    std::vector<double> noise_state;          // same layout
    std::vector<double> noise_action;
    std::vector<double> noise_ancestor;       // ancestor variant only

    std::size_t idx(std::size_t i, std::size_t t) const { return i * (horizon + 1) + t; }
    std::uint32_t state(std::size_t i, std::size_t t) const { return states[idx(i, t)]; }
    std::uint32_t action(std::size_t i, std::size_t t) const { return actions[idx(i, t)]; }
};

struct EventSpec {
    std::size_t t = 0;
    Dist target;
    double epsilon = 0.0;

    EventSpec() = default;
    EventSpec(std::size_t time, Dist tgt, double eps) : t(time), target(std::move(tgt)), epsilon(eps) {
        if (!(epsilon > 0.0)) throw std::invalid_argument("event epsilon must be positive");
    }
};

struct SimOptions {
    std::uint64_t seed = 0;
    Variant variant = Variant::OwnState;
    std::size_t upto = static_cast<std::size_t>(-1);  // default: model horizon
    std::uint64_t replication = 0;
    bool record_trace = true;
    std::vector<std::uint64_t> particle_keys;  // optional substream relabeling
};

struct SimResult {
    std::optional<EnsembleTrace> trace;
    EmpiricalFlow flow;
};

inline unsigned default_thread_count() {
    if (const char* env = std::getenv("MFGLD_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

namespace detail {

// empirical state marginal from integer counts; the exact construction shared
// by the simulator and the pushforward check
inline Dist empirical_state_dist(const std::vector<std::uint32_t>& state_counts, std::size_t n) {
    std::vector<double> w(state_counts.size());
    for (std::size_t x = 0; x < w.size(); ++x)
        w[x] = static_cast<double>(state_counts[x]) / static_cast<double>(n);
    return Dist(std::move(w));
}

template <typename F>
inline void parallel_for_index(std::uint64_t n, F&& fn) {
    unsigned nt = default_thread_count();
    if (nt <= 1 || n < 4) {
        for (std::uint64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    nt = static_cast<unsigned>(std::min<std::uint64_t>(nt, n));
    std::atomic<std::uint64_t> next{0};
    const std::uint64_t chunk = std::max<std::uint64_t>(1, n / (16 * nt));
    std::vector<std::thread> workers;
    workers.reserve(nt);
    for (unsigned w = 0; w < nt; ++w)
        workers.emplace_back([&] {
            for (;;) {
                std::uint64_t lo = next.fetch_add(chunk);
                if (lo >= n) return;
                std::uint64_t hi = std::min(n, lo + chunk);
                for (std::uint64_t i = lo; i < hi; ++i) fn(i);
            }
        });
    for (auto& w : workers) w.join();
}

}  // namespace detail

inline SimResult simulate(const ModelSpec& m, std::size_t n_particles, const SimOptions& opts) {
    if (n_particles < 1) throw std::invalid_argument("simulate: need at least one particle");
    m.require_policy();
    const std::size_t upto = opts.upto == static_cast<std::size_t>(-1) ? m.horizon : opts.upto;
    if (upto > m.horizon) throw std::invalid_argument("simulate: upto exceeds horizon");
    if (!opts.particle_keys.empty() && opts.particle_keys.size() < n_particles)
        throw std::invalid_argument("simulate: particle key list too short");

    const std::size_t nx = m.num_states(), ne = m.pair_count();
    NoiseDriver noise(opts.seed);
    auto key_of = [&](std::size_t i) {
        return opts.particle_keys.empty() ? static_cast<std::uint64_t>(i) : opts.particle_keys[i];
    };

    SimResult out;
    out.flow.particles = n_particles;
    out.flow.counts.assign(upto + 1, std::vector<std::uint32_t>(ne, 0));
    if (opts.record_trace) {
        EnsembleTrace tr;
        tr.particles = n_particles;
        tr.horizon = upto;
        tr.seed = opts.seed;
        tr.replication = opts.replication;
        tr.variant = opts.variant;
        tr.states.assign(n_particles * (upto + 1), 0);
        tr.actions.assign(n_particles * (upto + 1), 0);
        tr.noise_state.assign(n_particles * (upto + 1), 0.0);
        tr.noise_action.assign(n_particles * (upto + 1), 0.0);
        if (opts.variant == Variant::Ancestor) tr.noise_ancestor.assign(n_particles * (upto + 1), 0.0);
        out.trace = std::move(tr);
    }

    std::vector<std::uint32_t> cur_x(n_particles), cur_a(n_particles);
    std::vector<std::uint32_t> nxt_x(n_particles), nxt_a(n_particles);
    std::vector<std::uint32_t> state_counts(nx, 0);

    auto record = [&](std::size_t t, std::size_t i, std::uint32_t x, std::uint32_t a, double uw, double uv,
                      double ua) {
        ++out.flow.counts[t][m.pair_index(x, a)];
        if (out.trace) {
            auto& tr = *out.trace;
            std::size_t p = tr.idx(i, t);
            tr.states[p] = x;
            tr.actions[p] = a;
            tr.noise_state[p] = uw;
            tr.noise_action[p] = uv;
            if (opts.variant == Variant::Ancestor) tr.noise_ancestor[p] = ua;
        }
    };

    for (std::size_t i = 0; i < n_particles; ++i) {
        double uw = noise.uniform(opts.replication, key_of(i), 0, NoiseRole::State);
        double uv = noise.uniform(opts.replication, key_of(i), 0, NoiseRole::Action);
        auto x = static_cast<std::uint32_t>(inverse_cdf(m.mu0.weights(), uw));
        auto a = static_cast<std::uint32_t>(inverse_cdf(m.policy[0].row(x), uv));
        cur_x[i] = x;
        cur_a[i] = a;
        ++state_counts[x];
        record(0, i, x, a, uw, uv, 0.0);
    }

    for (std::size_t t = 0; t < upto; ++t) {
        Kernel k = transition_kernel(m, detail::empirical_state_dist(state_counts, n_particles), t);
        std::vector<std::uint32_t> next_counts(nx, 0);
        for (std::size_t i = 0; i < n_particles; ++i) {
            double ua = 0.0;
            std::size_t src = i;
            if (opts.variant == Variant::Ancestor) {
                ua = noise.uniform(opts.replication, key_of(i), t + 1, NoiseRole::Ancestor);
                src = std::min(n_particles - 1, static_cast<std::size_t>(ua * static_cast<double>(n_particles)));
            }
            double uw = noise.uniform(opts.replication, key_of(i), t + 1, NoiseRole::State);
            double uv = noise.uniform(opts.replication, key_of(i), t + 1, NoiseRole::Action);
            auto xp = static_cast<std::uint32_t>(
                inverse_cdf(k.row(m.pair_index(cur_x[src], cur_a[src])), uw));
            auto ap = static_cast<std::uint32_t>(inverse_cdf(m.policy[t + 1].row(xp), uv));
            nxt_x[i] = xp;
            nxt_a[i] = ap;
            ++next_counts[xp];
            record(t + 1, i, xp, ap, uw, uv, ua);
        }
        cur_x.swap(nxt_x);
        cur_a.swap(nxt_a);
        state_counts.swap(next_counts);
    }
    return out;
}

// Path empirical measure: the multiset of realized (state path, action path)
// pairs with multiplicities, in lexicographic path order.
struct PathAtom {
    std::vector<std::uint32_t> states;  // length horizon+1
    std::vector<std::uint32_t> actions;
    std::uint64_t count = 0;

    auto operator<=>(const PathAtom&) const = default;
};

inline std::vector<PathAtom> path_empirical_measure(const EnsembleTrace& tr) {
    std::vector<PathAtom> atoms;
    atoms.reserve(tr.particles);
    for (std::size_t i = 0; i < tr.particles; ++i) {
        PathAtom a;
        a.states.reserve(tr.horizon + 1);
        a.actions.reserve(tr.horizon + 1);
        for (std::size_t t = 0; t <= tr.horizon; ++t) {
            a.states.push_back(tr.state(i, t));
            a.actions.push_back(tr.action(i, t));
        }
        a.count = 1;
        atoms.push_back(std::move(a));
    }
    std::sort(atoms.begin(), atoms.end());
    std::vector<PathAtom> merged;
    for (auto& a : atoms) {
        if (!merged.empty() && merged.back().states == a.states && merged.back().actions == a.actions)
            ++merged.back().count;
        else
            merged.push_back(std::move(a));
    }
    return merged;
}

// ---------------------------------------------------------------------------
// Pathwise pushforward check
// ---------------------------------------------------------------------------

struct PhiCheckResult {
    bool ok = true;
    std::size_t mismatches = 0;
    std::size_t first_particle = 0;
    std::size_t first_time = 0;
    std::uint32_t max_discrepancy = 0;  // max index distance over mismatching entries
};

// Re-runs every particle's deterministic orbit through the inverse-CDF maps,
// driven only by the recorded initial states and noise variates, rebuilding
// the empirical state marginal from the recomputed states at each step. The
// recomputed paths and empirical measures must match the trace exactly.
inline PhiCheckResult phi_check(const ModelSpec& m, const EnsembleTrace& tr) {
    if (tr.variant != Variant::OwnState)
        throw std::invalid_argument("phi_check: defined for the own-state variant");
    m.require_policy();
    const std::size_t n = tr.particles, nx = m.num_states();

    PhiCheckResult res;
    auto note = [&](std::size_t i, std::size_t t, std::uint32_t got, std::uint32_t want) {
        if (got == want) return;
        if (res.ok) {
            res.first_particle = i;
            res.first_time = t;
        }
        res.ok = false;
        ++res.mismatches;
        std::uint32_t d = got > want ? got - want : want - got;
        res.max_discrepancy = std::max(res.max_discrepancy, d);
    };

    std::vector<std::uint32_t> x(n), a(n), state_counts(nx, 0);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = tr.state(i, 0);  // initial coordinate of the atom
        a[i] = static_cast<std::uint32_t>(inverse_cdf(m.policy[0].row(x[i]), tr.noise_action[tr.idx(i, 0)]));
        ++state_counts[x[i]];
        note(i, 0, a[i], tr.action(i, 0));
    }
    for (std::size_t t = 0; t < tr.horizon; ++t) {
        Kernel k = transition_kernel(m, detail::empirical_state_dist(state_counts, n), t);
        std::vector<std::uint32_t> next_counts(nx, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto xp = static_cast<std::uint32_t>(
                inverse_cdf(k.row(m.pair_index(x[i], a[i])), tr.noise_state[tr.idx(i, t + 1)]));
            auto ap =
                static_cast<std::uint32_t>(inverse_cdf(m.policy[t + 1].row(xp), tr.noise_action[tr.idx(i, t + 1)]));
            note(i, t + 1, xp, tr.state(i, t + 1));
            note(i, t + 1, ap, tr.action(i, t + 1));
            x[i] = xp;
            a[i] = ap;
            ++next_counts[xp];
        }
        state_counts.swap(next_counts);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators
// ---------------------------------------------------------------------------

struct WilsonInterval {
    double lo = 0.0, hi = 1.0;
};

inline WilsonInterval wilson_interval(std::uint64_t hits, std::uint64_t n, double z = 1.959963984540054) {
    if (n == 0) return {};
    double ph = static_cast<double>(hits) / static_cast<double>(n);
    double nn = static_cast<double>(n);
    double denom = 1.0 + z * z / nn;
    double center = (ph + z * z / (2.0 * nn)) / denom;
    double half = z * std::sqrt(ph * (1.0 - ph) / nn + z * z / (4.0 * nn * nn)) / denom;
    WilsonInterval w{std::max(0.0, center - half), std::min(1.0, center + half)};
    if (hits == 0) w.lo = 0.0;  // endpoints are exact at the boundary
    if (hits == n) w.hi = 1.0;
    return w;
}

// fast path: one replication, counts at the event time only
namespace detail {

inline bool replication_hits(const ModelSpec& m, const EventSpec& ev, std::size_t n, std::uint64_t seed,
                             std::uint64_t rep, Variant variant) {
    SimOptions opts;
    opts.seed = seed;
    opts.variant = variant;
    opts.upto = ev.t;
    opts.replication = rep;
    opts.record_trace = false;
    SimResult r = simulate(m, n, opts);
    return r.flow.l1_to(ev.t, ev.target) <= ev.epsilon;
}

}  // namespace detail

struct ProbEstimate {
    std::size_t n_particles = 0;
    std::uint64_t reps = 0;
    std::uint64_t hits = 0;
    double p_hat = 0.0;
    WilsonInterval ci;
};

inline ProbEstimate estimate_probability(const ModelSpec& m, const EventSpec& ev, std::size_t n_particles,
                                         std::uint64_t reps, std::uint64_t seed, Variant variant) {
    if (reps < 1) throw std::invalid_argument("estimate_probability: reps must be >= 1");
    if (ev.target.size() != m.pair_count()) throw std::invalid_argument("event target size mismatch");
    std::vector<std::uint8_t> hit(reps, 0);
    detail::parallel_for_index(reps, [&](std::uint64_t r) {
        hit[r] = detail::replication_hits(m, ev, n_particles, seed, r, variant) ? 1 : 0;
    });
    ProbEstimate est;
    est.n_particles = n_particles;
    est.reps = reps;
    for (std::uint64_t r = 0; r < reps; ++r) est.hits += hit[r];
    est.p_hat = static_cast<double>(est.hits) / static_cast<double>(reps);
    est.ci = wilson_interval(est.hits, reps);
    return est;
}

struct SlopeRow {
    std::size_t n_particles = 0;
    std::uint64_t reps = 0;
    std::uint64_t hits = 0;
    double p_hat = 0.0;
    WilsonInterval ci;
    double slope = 0.0;      // -log(p_hat)/N
    double slope_lo = 0.0;   // from the Wilson upper end
    double slope_hi = 0.0;   // from the Wilson lower end
    bool usable = false;     // dropped when no hits were observed
};

struct SlopeTable {
    std::vector<SlopeRow> rows;
    double extrapolated = 0.0;     // linear-in-1/N intercept
    double extrapolated_se = 0.0;  // from the Wilson-derived weights
    std::size_t usable_rows = 0;
    bool ok = false;
};

// Decay-rate table over a ladder of population sizes plus a weighted
// linear-in-1/N extrapolation of -log(p)/N. Zero-hit rows are reported and
// dropped rather than smoothed. Each row draws from its own substream family.
inline SlopeTable ldp_slope(const ModelSpec& m, const EventSpec& ev, const std::vector<std::size_t>& n_list,
                            const std::vector<std::uint64_t>& reps_list, std::uint64_t seed, Variant variant) {
    if (n_list.empty()) throw std::invalid_argument("ldp_slope: empty N list");
    for (std::size_t i = 0; i + 1 < n_list.size(); ++i)
        if (n_list[i] >= n_list[i + 1]) throw std::invalid_argument("ldp_slope: N list must be increasing");
    if (reps_list.size() != 1 && reps_list.size() != n_list.size())
        throw std::invalid_argument("ldp_slope: reps list must have one entry or one per N");

    SlopeTable table;
    for (std::size_t i = 0; i < n_list.size(); ++i) {
        std::uint64_t reps = reps_list.size() == 1 ? reps_list[0] : reps_list[i];
        std::uint64_t row_seed = detail::mix64(seed ^ detail::mix64(n_list[i]));
        ProbEstimate est = estimate_probability(m, ev, n_list[i], reps, row_seed, variant);
        SlopeRow row;
        row.n_particles = est.n_particles;
        row.reps = est.reps;
        row.hits = est.hits;
        row.p_hat = est.p_hat;
        row.ci = est.ci;
        row.usable = est.hits > 0;
        if (row.usable) {
            double n = static_cast<double>(est.n_particles);
            row.slope = -std::log(est.p_hat) / n;
            row.slope_lo = est.ci.hi < 1.0 ? -std::log(est.ci.hi) / n : 0.0;
            row.slope_hi = est.ci.lo > 0.0 ? -std::log(est.ci.lo) / n : row.slope;
            ++table.usable_rows;
        }
        table.rows.push_back(std::move(row));
    }

    // weighted least squares of slope on 1/N
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (const auto& row : table.rows) {
        if (!row.usable) continue;
        double sigma = std::max(0.5 * (row.slope_hi - row.slope_lo), 1e-12);
        double w = 1.0 / (sigma * sigma);
        double xv = 1.0 / static_cast<double>(row.n_particles);
        sw += w;
        swx += w * xv;
        swy += w * row.slope;
        swxx += w * xv * xv;
        swxy += w * xv * row.slope;
    }
    if (table.usable_rows >= 2) {
        double det = sw * swxx - swx * swx;
        if (std::abs(det) > 1e-300) {
            table.extrapolated = (swxx * swy - swx * swxy) / det;
            table.extrapolated_se = std::sqrt(std::max(0.0, swxx / det));
            table.ok = true;
        }
    } else if (table.usable_rows == 1) {
        for (const auto& row : table.rows)
            if (row.usable) {
                table.extrapolated = row.slope;
                table.extrapolated_se = 0.5 * (row.slope_hi - row.slope_lo);
            }
        table.ok = true;
    }
    return table;
}

struct LlnRow {
    std::size_t n_particles = 0;
    double mean_l1 = 0.0;
};

// mean over replications of || b^N(t) - flow(t) ||_1 per population size
inline std::vector<LlnRow> lln_curve(const ModelSpec& m, std::size_t t, const std::vector<std::size_t>& n_list,
                                     std::uint64_t reps, std::uint64_t seed) {
    if (t > m.horizon) throw std::invalid_argument("lln_curve: t exceeds horizon");
    Flow flow = mean_field_flow(m, t);
    const Dist& target = flow[t];
    std::vector<LlnRow> rows;
    for (std::size_t n : n_list) {
        std::uint64_t row_seed = detail::mix64(seed ^ detail::mix64(n));
        std::vector<double> err(reps, 0.0);
        detail::parallel_for_index(reps, [&](std::uint64_t r) {
            SimOptions opts;
            opts.seed = row_seed;
            opts.variant = Variant::OwnState;
            opts.upto = t;
            opts.replication = r;
            opts.record_trace = false;
            err[r] = simulate(m, n, opts).flow.l1_to(t, target);
        });
        double sum = 0.0;
        for (std::uint64_t r = 0; r < reps; ++r) sum += err[r];
        rows.push_back({n, sum / static_cast<double>(reps)});
    }
    return rows;
}

}  // namespace mfgld
