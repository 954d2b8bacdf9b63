// Finite-horizon mean-field equilibrium by damped best-response iteration.
#pragma once

#include <cstddef>
#include <vector>

#include "mfgld/core.hpp"
#include "mfgld/model.hpp"

namespace mfgld {

struct MfeResult {
    std::vector<Kernel> policy;  // [t]: X -> A, deterministic rows
    Flow flow;                   // pair flow induced by the returned policy
    std::vector<Dist> state_flow;
    std::size_t iterations = 0;
    double residual = 0.0;       // max-over-t L1 between consecutive state flows
    bool converged = false;
};

namespace detail {

// state flow mu(0..T) under a fixed policy, kernels evaluated at the flow itself
inline std::vector<Dist> state_flow_under(const ModelSpec& m, const std::vector<Kernel>& policy) {
    std::vector<Dist> mu;
    mu.reserve(m.horizon + 1);
    mu.push_back(m.mu0);
    for (std::size_t t = 0; t < m.horizon; ++t) {
        Kernel k = transition_kernel(m, mu[t], t);
        std::vector<double> next(m.num_states(), 0.0);
        for (std::size_t x = 0; x < m.num_states(); ++x) {
            auto pr = policy[t].row(x);
            for (std::size_t a = 0; a < m.num_actions(); ++a) {
                double mass = mu[t][x] * pr[a];
                if (mass == 0.0) continue;
                auto kr = k.row(m.pair_index(x, a));
                for (std::size_t xp = 0; xp < m.num_states(); ++xp) next[xp] += mass * kr[xp];
            }
        }
        mu.push_back(Dist(std::move(next)));
    }
    return mu;
}

// deterministic best response against a fixed state flow, backward induction
// on total finite-horizon cost; ties break to the lowest action index
inline std::vector<Kernel> best_response(const ModelSpec& m, const std::vector<Dist>& mu) {
    const std::size_t nx = m.num_states(), na = m.num_actions(), T = m.horizon;
    std::vector<std::vector<double>> value(T + 2, std::vector<double>(nx, 0.0));
    std::vector<std::vector<std::size_t>> argmin(T + 1, std::vector<std::size_t>(nx, 0));
    for (std::size_t ti = T + 1; ti-- > 0;) {
        Kernel k;
        if (ti < T) k = transition_kernel(m, mu[ti], ti);
        for (std::size_t x = 0; x < nx; ++x) {
            double best = kInf;
            std::size_t best_a = 0;
            for (std::size_t a = 0; a < na; ++a) {
                double q = stage_cost(m, ti, x, a, mu[ti]);
                if (ti < T) {
                    auto kr = k.row(m.pair_index(x, a));
                    for (std::size_t xp = 0; xp < nx; ++xp) q += kr[xp] * value[ti + 1][xp];
                }
                if (q < best) {
                    best = q;
                    best_a = a;
                }
            }
            value[ti][x] = best;
            argmin[ti][x] = best_a;
        }
    }
    std::vector<Kernel> policy;
    policy.reserve(T + 1);
    for (std::size_t t = 0; t <= T; ++t) {
        std::vector<double> rows(nx * na, 0.0);
        for (std::size_t x = 0; x < nx; ++x) rows[x * na + argmin[t][x]] = 1.0;
        policy.push_back(Kernel(nx, na, std::move(rows)));
    }
    return policy;
}

}  // namespace detail

inline MfeResult solve_mfe(const ModelSpec& m, double damping = 0.5, double tol = 1e-10,
                           std::size_t max_iter = 500) {
    if (!m.has_costs()) throw std::invalid_argument("solve_mfe: model has no costs");
    if (!(damping > 0.0 && damping <= 1.0)) throw std::invalid_argument("solve_mfe: damping must be in (0,1]");

    // warm start: flow induced by the best response to the constant-mu0 flow
    std::vector<Dist> mu(m.horizon + 1, m.mu0);
    mu = detail::state_flow_under(m, detail::best_response(m, mu));

    MfeResult best;
    best.residual = kInf;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        std::vector<Kernel> policy = detail::best_response(m, mu);
        std::vector<Dist> induced = detail::state_flow_under(m, policy);
        double res = 0.0;
        for (std::size_t t = 0; t <= m.horizon; ++t) res = std::max(res, l1_distance(mu[t], induced[t]));
        if (res < best.residual) {
            best.policy = policy;
            best.state_flow = induced;
            best.residual = res;
            best.iterations = it;
        }
        if (res < tol) {
            best.converged = true;
            break;
        }
        for (std::size_t t = 0; t <= m.horizon; ++t) {
            std::vector<double> blend(m.num_states());
            for (std::size_t x = 0; x < m.num_states(); ++x)
                blend[x] = (1.0 - damping) * mu[t][x] + damping * induced[t][x];
            mu[t] = Dist(std::move(blend));
        }
    }

    // pair flow b(t) = mu(t) (x) pi_t of the returned policy
    ModelSpec solved = m;
    solved.policy = best.policy;
    solved.policy_pending_solve = false;
    best.flow.clear();
    for (std::size_t t = 0; t <= m.horizon; ++t) {
        std::vector<double> w(m.pair_count(), 0.0);
        for (std::size_t x = 0; x < m.num_states(); ++x) {
            auto pr = best.policy[t].row(x);
            for (std::size_t a = 0; a < m.num_actions(); ++a) w[m.pair_index(x, a)] = best.state_flow[t][x] * pr[a];
        }
        best.flow.push_back(Dist(std::move(w)));
    }
    return best;
}

// convenience: resolve a "solve"-marked model into an explicit-policy model
inline ModelSpec with_policy(const ModelSpec& m, std::vector<Kernel> policy) {
    ModelSpec out = m;
    out.policy = std::move(policy);
    out.policy_pending_solve = false;
    return out;
}

}  // namespace mfgld
