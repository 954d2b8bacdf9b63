// Rate functions for empirical state-action measures: the closed-form
// stepwise rate, the variational projection rate computed by per-step
// entropic bridges, the reversed-reference residual linking the two, a
// Donsker-Varadhan recursion lower bound, the path-space rate, and infima
// over deviation balls.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "mfgld/core.hpp"
#include "mfgld/entropy.hpp"
#include "mfgld/model.hpp"
#include "mfgld/noise.hpp"
#include "mfgld/path_measure.hpp"
#include "mfgld/sinkhorn.hpp"

namespace mfgld {

struct StepDiag {
    std::size_t iterations = 0;
    double marginal_error = 0.0;
    bool converged = true;
    double lower = 0.0;  // weak-duality bracket for the step value
    double upper = 0.0;
};

struct RateReport {
    double value = 0.0;
    std::vector<double> terms;
    std::vector<StepDiag> steps;
    bool converged = true;
};

using KernelBuilder = std::function<Kernel(const ModelSpec&, const Dist&, std::size_t)>;

inline Kernel default_pair_kernel(const ModelSpec& m, const Dist& nu, std::size_t t) {
    return pair_kernel(m, nu, t);
}

namespace detail {

inline void accumulate(RateReport& r, double term) {
    r.terms.push_back(term);
    r.value = r.value + term;  // inf propagates
}

}  // namespace detail

// Closed-form stepwise rate: divergence of the initial marginal from nu(0)
// plus one divergence from the one-step flow image per transition.
inline RateReport stepwise_rate(const ModelSpec& m, const Flow& gamma,
                                const KernelBuilder& build = default_pair_kernel) {
    if (gamma.empty() || gamma.size() > m.horizon + 1)
        throw std::invalid_argument("stepwise_rate: flow length must be 1..T+1");
    RateReport r;
    detail::accumulate(r, relative_entropy(gamma[0], initial_pair_dist(m)));
    r.steps.push_back({});
    for (std::size_t t = 0; t + 1 < gamma.size(); ++t) {
        Dist image = build(m, gamma[t], t).apply(gamma[t]);
        detail::accumulate(r, relative_entropy(gamma[t + 1], image));
        r.steps.push_back({});
    }
    return r;
}

// Variational projection rate: infimum of R(. | reference path law) over path
// measures with the given time marginals. The reference is Markov and the
// constraints are single-time marginals, so the infimum decomposes into the
// initial divergence plus one static bridge per step (see the markovianize
// reduction in path_measure.hpp); the acceptance suite cross-checks this
// against the full-joint convex program.
//
// initial_x_override, when given, replaces the model's initial state
// distribution in nu(0); it exposes the split of the rate into an initial
// state-marginal divergence plus the rate of the decoupled model.
inline RateReport projection_rate(const ModelSpec& m, const Flow& gamma, double bridge_tol = kBridgeTol,
                                  std::size_t bridge_max_iter = kBridgeMaxIter,
                                  const Dist* initial_x_override = nullptr) {
    if (gamma.empty() || gamma.size() > m.horizon + 1)
        throw std::invalid_argument("projection_rate: flow length must be 1..T+1");
    m.require_policy();
    RateReport r;
    Dist nu0 = initial_pair_dist(m);
    if (initial_x_override) {
        ModelSpec alt = m;
        alt.mu0 = *initial_x_override;
        nu0 = initial_pair_dist(alt);
    }
    detail::accumulate(r, relative_entropy(gamma[0], nu0));
    r.steps.push_back({});
    for (std::size_t t = 0; t + 1 < gamma.size(); ++t) {
        Coupling ref = joint_from_kernel(gamma[t], pair_kernel(m, gamma[t], t));
        BridgeResult br = sinkhorn_bridge(ref, gamma[t], gamma[t + 1], bridge_tol, bridge_max_iter);
        detail::accumulate(r, br.value);
        r.steps.push_back({br.iterations, br.marginal_error, br.converged, br.value_lower, br.value_upper});
        r.converged = r.converged && br.converged;
    }
    return r;
}

// Residual of the projection rate over the stepwise rate: the I-projection
// onto the same marginals of the time-reversed reference built from the
// Bayes reversals of each step joint. Computed by the same stepwise bridge
// decomposition, run in reversed time order. Terms are listed from time T
// downward.
inline RateReport reversal_residual(const ModelSpec& m, const Flow& gamma, double bridge_tol = kBridgeTol,
                                    std::size_t bridge_max_iter = kBridgeMaxIter) {
    if (gamma.empty() || gamma.size() > m.horizon + 1)
        throw std::invalid_argument("reversal_residual: flow length must be 1..T+1");
    m.require_policy();
    RateReport r;
    detail::accumulate(r, 0.0);  // time-T marginal of the reversed reference is gamma[T] itself
    r.steps.push_back({});
    for (std::size_t t = gamma.size() - 1; t-- > 0;) {
        Coupling forward = joint_from_kernel(gamma[t], pair_kernel(m, gamma[t], t));
        Reversal rev = reverse_kernel(forward);
        Coupling ref = joint_from_kernel(gamma[t + 1], rev.backward);
        BridgeResult br = sinkhorn_bridge(ref, gamma[t + 1], gamma[t], bridge_tol, bridge_max_iter);
        detail::accumulate(r, br.value);
        r.steps.push_back({br.iterations, br.marginal_error, br.converged, br.value_lower, br.value_upper});
        r.converged = r.converged && br.converged;
    }
    return r;
}

// Path-space rate of a Markov path measure phi: divergence from the reference
// path law driven by phi's own state marginals, evaluated by the chain rule
// over factors.
inline double path_space_rate(const ModelSpec& m, const MarkovPathMeasure& phi) {
    phi.check();
    if (phi.space_size() != m.pair_count() || phi.steps() > m.horizon)
        throw std::invalid_argument("path_space_rate: shape mismatch");
    Flow marg = phi.time_marginals();
    double value = relative_entropy(phi.initial, initial_pair_dist(m));
    for (std::size_t t = 0; t < phi.steps(); ++t) {
        if (value == kInf) return kInf;
        Kernel ref = pair_kernel(m, marg[t], t);
        for (std::size_t z = 0; z < phi.space_size(); ++z) {
            if (marg[t][z] == 0.0) continue;
            double d = relative_entropy(phi.kernels[t].row(z), ref.row(z));
            if (d == kInf) return kInf;
            value += marg[t][z] * d;
        }
    }
    return value;
}

// ---------------------------------------------------------------------------
// Donsker-Varadhan recursion lower bound
// ---------------------------------------------------------------------------

struct DvBound {
    double value = -kInf;
    double grid_error_estimate = 0.0;  // refinement gain observed at the inner minimizations
};

namespace detail {

// enumerate a resolution-n grid over the probability simplex in dimension d;
// callback receives each grid point
template <typename F>
inline void simplex_grid(std::size_t d, std::size_t n, F&& fn) {
    if (d == 1) {
        fn(std::vector<double>{1.0});
        return;
    }
    if (d == 2) {
        for (std::size_t i = 0; i <= n; ++i) {
            double s = static_cast<double>(i) / static_cast<double>(n);
            fn(std::vector<double>{s, 1.0 - s});
        }
        return;
    }
    if (d == 3) {
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t j = 0; j + i <= n; ++j) {
                double s1 = static_cast<double>(i) / static_cast<double>(n);
                double s2 = static_cast<double>(j) / static_cast<double>(n);
                fn(std::vector<double>{s1, s2, 1.0 - s1 - s2});
            }
        return;
    }
    throw std::invalid_argument("simplex_grid: dimension must be <= 3");
}

// golden-section refinement of a 1-d function on [lo, hi]
template <typename F>
inline double golden_min(F&& fn, double lo, double hi, int iters = 80) {
    const double inv_phi = 0.6180339887498949;
    double a = lo, bb = hi;
    double c = bb - inv_phi * (bb - a), d = a + inv_phi * (bb - a);
    double fc = fn(c), fd = fn(d);
    for (int k = 0; k < iters; ++k) {
        if (fc < fd) {
            bb = d;
            d = c;
            fd = fc;
            c = bb - inv_phi * (bb - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (bb - a);
            fd = fn(d);
        }
    }
    return fc < fd ? fc : fd;
}

}  // namespace detail

// Lower bound on the time-t marginal rate via the variational recursion
//   V_t(gamma) >= max_{g in family} [ <g,gamma> + min_nu ( V_{t-1}(nu) - log <e^g, Gamma_{t-1}(nu)> ) ]
// with the exact divergence from nu(0) at the base. The inner minimum is taken
// over a simplex grid and sharpened by golden-section refinement, so the
// returned value under-estimates the true supremum up to the reported grid
// error.
inline DvBound dv_lower_bound(const ModelSpec& m, const Dist& gamma, std::size_t t,
                              const std::vector<std::vector<double>>& g_family, std::size_t grid_resolution) {
    const std::size_t ne = m.pair_count();
    if (ne > 3) throw std::invalid_argument("dv_lower_bound: |E| must be <= 3");
    if (grid_resolution == 0) throw std::invalid_argument("dv_lower_bound: resolution must be positive");
    for (const auto& g : g_family)
        if (g.size() != ne) throw std::invalid_argument("dv_lower_bound: test vector size mismatch");

    if (t > m.horizon) throw std::invalid_argument("dv_lower_bound: t must be <= horizon");
    Dist nu0 = initial_pair_dist(m);
    if (t == 0) return DvBound{relative_entropy(gamma, nu0), 0.0};

    // level(g) at stage l: min_nu ( Vhat_{l-1}(nu) - log <e^g, Gamma_{l-1}(nu)> );
    // the per-stage constants make Vhat_l(x) = max_g <g,x> + c_l(g) cheap to evaluate
    std::vector<std::vector<double>> c(t + 1);  // c[l][gi]
    DvBound out;

    auto vhat = [&](std::size_t level, const Dist& nu) {
        if (level == 0) return relative_entropy(nu, nu0);
        double best = -kInf;
        for (std::size_t gi = 0; gi < g_family.size(); ++gi) {
            double dot = 0.0;
            for (std::size_t e = 0; e < ne; ++e) dot += g_family[gi][e] * nu[e];
            best = std::max(best, dot + c[level][gi]);
        }
        return best;
    };

    for (std::size_t level = 1; level <= t; ++level) {
        c[level].assign(g_family.size(), 0.0);
        for (std::size_t gi = 0; gi < g_family.size(); ++gi) {
            const auto& g = g_family[gi];
            auto inner = [&](const Dist& nu) {
                double v = vhat(level - 1, nu);
                if (v == kInf) return kInf;
                Dist img = flow_step(m, nu, level - 1);
                double mgf = 0.0;
                for (std::size_t e = 0; e < ne; ++e) mgf += std::exp(g[e]) * img[e];
                return v - std::log(mgf);
            };
            double best = kInf;
            double best_coord = 0.0;
            detail::simplex_grid(ne, grid_resolution, [&](const std::vector<double>& pt) {
                double v = inner(Dist(std::vector<double>(pt)));
                if (v < best) {
                    best = v;
                    best_coord = pt[0];
                }
            });
            double refined = best;
            if (ne == 2) {
                double h = 1.0 / static_cast<double>(grid_resolution);
                double lo = std::max(0.0, best_coord - h), hi = std::min(1.0, best_coord + h);
                refined = std::min(best, detail::golden_min(
                                             [&](double s) {
                                                 return inner(Dist(std::vector<double>{s, 1.0 - s}));
                                             },
                                             lo, hi));
            }
            out.grid_error_estimate = std::max(out.grid_error_estimate, best - refined);
            c[level][gi] = refined;
        }
    }

    out.value = vhat(t, gamma);
    return out;
}

// ---------------------------------------------------------------------------
// Infima over deviation balls
// ---------------------------------------------------------------------------

struct SearchBudget {
    std::size_t multistarts = 12;
    std::size_t nm_iterations = 400;
    std::size_t grid_per_dim = 120;  // dense certification grid when <= 2 search dims
    std::uint64_t seed = 0x5eedBa11u;
};

struct BallRateResult {
    double value = kInf;
    Flow witness;
    double grid_gap = 0.0;  // |search - dense grid| when the grid ran
    bool grid_certified = false;
    bool budget_exhausted = false;
};

namespace detail {

// Nelder-Mead on R^d, standard coefficients
template <typename F>
inline std::pair<std::vector<double>, double> nelder_mead(F&& fn, std::vector<double> x0, double scale,
                                                          std::size_t max_iter) {
    const std::size_t d = x0.size();
    std::vector<std::vector<double>> pts(d + 1, x0);
    std::vector<double> fv(d + 1);
    for (std::size_t i = 0; i < d; ++i) pts[i + 1][i] += scale;
    for (std::size_t i = 0; i <= d; ++i) fv[i] = fn(pts[i]);
    std::vector<std::size_t> ord(d + 1);
    for (std::size_t it = 0; it < max_iter; ++it) {
        for (std::size_t i = 0; i <= d; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::size_t best = ord[0], worst = ord[d], second = ord[d - 1];
        std::vector<double> centroid(d, 0.0);
        for (std::size_t i = 0; i <= d; ++i) {
            if (i == worst) continue;
            for (std::size_t k = 0; k < d; ++k) centroid[k] += pts[i][k] / static_cast<double>(d);
        }
        auto blend = [&](double coef) {
            std::vector<double> p(d);
            for (std::size_t k = 0; k < d; ++k) p[k] = centroid[k] + coef * (pts[worst][k] - centroid[k]);
            return p;
        };
        std::vector<double> refl = blend(-1.0);
        double fr = fn(refl);
        if (fr < fv[best]) {
            std::vector<double> exp_p = blend(-2.0);
            double fe = fn(exp_p);
            if (fe < fr) {
                pts[worst] = exp_p;
                fv[worst] = fe;
            } else {
                pts[worst] = refl;
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            pts[worst] = refl;
            fv[worst] = fr;
        } else {
            std::vector<double> con = blend(fr < fv[worst] ? -0.5 : 0.5);
            double fc = fn(con);
            if (fc < std::min(fr, fv[worst])) {
                pts[worst] = con;
                fv[worst] = fc;
            } else {
                for (std::size_t i = 0; i <= d; ++i) {
                    if (i == best) continue;
                    for (std::size_t k = 0; k < d; ++k) pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
                    fv[i] = fn(pts[i]);
                }
            }
        }
        double spread = 0.0;
        for (std::size_t i = 0; i <= d; ++i) spread = std::max(spread, std::abs(fv[i] - fv[ord[0]]));
        if (spread < 1e-13) break;
    }
    std::size_t bi = 0;
    for (std::size_t i = 1; i <= d; ++i)
        if (fv[i] < fv[bi]) bi = i;
    return {pts[bi], fv[bi]};
}

inline Dist softmax_point(std::span<const double> logits_head) {
    std::vector<double> v(logits_head.begin(), logits_head.end());
    v.push_back(0.0);
    softmax_inplace(v);
    return Dist(std::move(v));
}

// pull a pair distribution into the L1 ball around target by shrinking
// toward the center; covers the whole ball and is the identity inside it
inline Dist into_ball(const Dist& p, const Dist& target, double eps) {
    double d = l1_distance(p, target);
    if (d <= eps) return p;
    double lam = eps / d;
    std::vector<double> w(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) w[i] = target[i] + lam * (p[i] - target[i]);
    return Dist(std::move(w));
}

}  // namespace detail

// Search for  inf { prefix projection rate of (gamma_0..gamma_t) :
//                   ||gamma_t - target||_1 <= eps }.
// Multi-start Nelder-Mead over softmax-parametrized flows, with a dense grid
// pass when the search space has at most two dimensions. The value is an
// upper bound on the true infimum; grid_gap reports the certification gap.
inline BallRateResult ball_rate_infimum(const ModelSpec& m, const Dist& target, double eps, std::size_t t,
                                        const SearchBudget& budget = {}) {
    if (!(eps > 0.0)) throw std::invalid_argument("ball_rate_infimum: eps must be positive");
    if (t > m.horizon) throw std::invalid_argument("ball_rate_infimum: t must be <= horizon");
    m.require_policy();
    const std::size_t ne = m.pair_count();
    const std::size_t dim_per = ne - 1;
    const std::size_t dims = (t + 1) * dim_per;

    auto assemble = [&](std::span<const double> params) {
        Flow gamma;
        gamma.reserve(t + 1);
        for (std::size_t s = 0; s <= t; ++s)
            gamma.push_back(detail::softmax_point(params.subspan(s * dim_per, dim_per)));
        gamma[t] = detail::into_ball(gamma[t], target, eps);
        return gamma;
    };
    auto objective = [&](const std::vector<double>& params) {
        for (double v : params)
            if (!std::isfinite(v) || std::abs(v) > 60.0) return kInf;
        return projection_rate(m, assemble(params)).value;
    };
    auto to_params = [&](const Flow& gamma) {
        std::vector<double> p(dims);
        for (std::size_t s = 0; s <= t; ++s)
            for (std::size_t k = 0; k < dim_per; ++k) {
                double num = std::max(gamma[s][k], 1e-9), den = std::max(gamma[s][ne - 1], 1e-9);
                p[s * dim_per + k] = std::log(num / den);
            }
        return p;
    };

    BallRateResult res;
    Flow mean_flow = mean_field_flow(m, t);

    std::vector<std::vector<double>> starts;
    starts.push_back(to_params(mean_flow));
    {
        Flow anchored = mean_flow;
        anchored[t] = target;
        starts.push_back(to_params(anchored));
    }
    NoiseDriver rng(budget.seed);
    for (std::size_t s = 0; s < budget.multistarts; ++s) {
        std::vector<double> p(dims);
        for (std::size_t k = 0; k < dims; ++k)
            p[k] = 4.0 * (rng.uniform(s, k, 0, NoiseRole::State) - 0.5);
        starts.push_back(std::move(p));
    }

    std::vector<double> best_params;
    for (const auto& s0 : starts) {
        auto [xp, fx] = detail::nelder_mead(objective, s0, 0.5, budget.nm_iterations);
        if (fx < res.value) {
            res.value = fx;
            best_params = xp;
        }
    }

    if (!best_params.empty()) res.witness = assemble(best_params);

    if (dims <= 2 && budget.grid_per_dim >= 2) {
        // dense product grid over the underlying simplices
        double grid_best = kInf;
        Flow grid_witness;
        const std::size_t n = budget.grid_per_dim;
        auto eval_flow = [&](Flow gamma) {
            gamma[t] = detail::into_ball(gamma[t], target, eps);
            double v = projection_rate(m, gamma).value;
            if (v < grid_best) {
                grid_best = v;
                grid_witness = std::move(gamma);
            }
        };
        if (dims == 1) {
            for (std::size_t i = 0; i <= n; ++i) {
                double s = static_cast<double>(i) / static_cast<double>(n);
                eval_flow({Dist(std::vector<double>{s, 1.0 - s})});
            }
        } else {
            for (std::size_t i = 0; i <= n; ++i)
                for (std::size_t j = 0; j <= n; ++j) {
                    double s0 = static_cast<double>(i) / static_cast<double>(n);
                    double s1 = static_cast<double>(j) / static_cast<double>(n);
                    eval_flow({Dist(std::vector<double>{s0, 1.0 - s0}), Dist(std::vector<double>{s1, 1.0 - s1})});
                }
        }
        res.grid_gap = std::abs(res.value - grid_best);
        res.grid_certified = true;
        if (grid_best < res.value) {
            res.value = grid_best;
            res.witness = std::move(grid_witness);
        }
    }
    return res;
}

// inf over flow prefixes of the projection rate with the time-t marginal
// pinned to gamma; the single-time analogue of ball_rate_infimum
inline double marginal_projection_rate(const ModelSpec& m, const Dist& gamma, std::size_t t,
                                       const SearchBudget& budget = {}) {
    m.require_policy();
    if (t == 0) return relative_entropy(gamma, initial_pair_dist(m));
    const std::size_t ne = m.pair_count();
    const std::size_t dim_per = ne - 1;
    const std::size_t dims = t * dim_per;

    auto assemble = [&](std::span<const double> params) {
        Flow g;
        g.reserve(t + 1);
        for (std::size_t s = 0; s < t; ++s) g.push_back(detail::softmax_point(params.subspan(s * dim_per, dim_per)));
        g.push_back(gamma);
        return g;
    };
    auto objective = [&](const std::vector<double>& params) {
        for (double v : params)
            if (!std::isfinite(v) || std::abs(v) > 60.0) return kInf;
        return projection_rate(m, assemble(params)).value;
    };

    double best = kInf;
    Flow mean_flow = mean_field_flow(m, t - 1);
    std::vector<std::vector<double>> starts;
    {
        std::vector<double> p(dims);
        for (std::size_t s = 0; s < t; ++s)
            for (std::size_t k = 0; k < dim_per; ++k) {
                double num = std::max(mean_flow[s][k], 1e-9), den = std::max(mean_flow[s][ne - 1], 1e-9);
                p[s * dim_per + k] = std::log(num / den);
            }
        starts.push_back(std::move(p));
    }
    NoiseDriver rng(budget.seed ^ 0x9e37u);
    for (std::size_t s = 0; s < budget.multistarts; ++s) {
        std::vector<double> p(dims);
        for (std::size_t k = 0; k < dims; ++k) p[k] = 4.0 * (rng.uniform(s, k, 1, NoiseRole::State) - 0.5);
        starts.push_back(std::move(p));
    }
    for (const auto& s0 : starts) {
        auto [xp, fx] = detail::nelder_mead(objective, s0, 0.5, budget.nm_iterations);
        best = std::min(best, fx);
    }

    if (dims <= 2 && budget.grid_per_dim >= 2) {
        const std::size_t n = budget.grid_per_dim;
        if (dims == 1) {
            for (std::size_t i = 0; i <= n; ++i) {
                double s = static_cast<double>(i) / static_cast<double>(n);
                best = std::min(best, projection_rate(m, {Dist(std::vector<double>{s, 1.0 - s}), gamma}).value);
            }
        } else {
            for (std::size_t i = 0; i <= n; ++i)
                for (std::size_t j = 0; j <= n; ++j) {
                    double s0 = static_cast<double>(i) / static_cast<double>(n);
                    double s1 = static_cast<double>(j) / static_cast<double>(n);
                    best = std::min(best, projection_rate(m, {Dist(std::vector<double>{s0, 1.0 - s0}),
                                                              Dist(std::vector<double>{s1, 1.0 - s1}), gamma})
                                              .value);
                }
        }
    }
    return best;
}

}  // namespace mfgld
