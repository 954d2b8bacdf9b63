// Finite mean-field model: softmax transition family, policy composition,
// one-step flow map, and mean-field flows.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfgld/core.hpp"

namespace mfgld {

using T1 = std::vector<double>;
using T2 = std::vector<T1>;
using T3 = std::vector<T2>;
using T4 = std::vector<T3>;
using T5 = std::vector<T4>;

// Model data. Transition logits are affine in the state marginal:
//   p_t(x'|x,a; mu) = softmax_{x'}( base_logits[t][x][a][x'] + sum_k mf_weights[t][x][a][x'][k] * mu(k) )
// which is Lipschitz-continuous in mu by construction. Policies are stochastic
// kernels from states to actions, one per time t = 0..T. Costs are optional and
// may also depend affinely on the state marginal.
struct ModelSpec {
    Space state_space;   // X
    Space action_space;  // A
    std::size_t horizon = 0;  // T
    Dist mu0;            // over X
    T4 base_logits;      // [t][x][a][x'], t = 0..T-1
    T5 mf_weights;       // [t][x][a][x'][k]; empty tensor means mu-independent
    std::vector<Kernel> policy;  // [t]: X -> A, t = 0..T; empty while marked "solve"
    bool policy_pending_solve = false;
    T3 costs;            // [t][x][a], t = 0..T; empty means no costs
    T4 cost_mf_weights;  // [t][x][a][k]; empty means mu-independent costs

    std::size_t num_states() const { return state_space.size(); }
    std::size_t num_actions() const { return action_space.size(); }
    std::size_t pair_count() const { return num_states() * num_actions(); }

    // E = X x A with the action index varying fastest
    std::size_t pair_index(std::size_t x, std::size_t a) const { return x * num_actions() + a; }
    std::size_t pair_state(std::size_t e) const { return e / num_actions(); }
    std::size_t pair_action(std::size_t e) const { return e % num_actions(); }

    std::string pair_label(std::size_t e) const {
        return state_space.labels[pair_state(e)] + "|" + action_space.labels[pair_action(e)];
    }

    bool mu_dependent() const { return !mf_weights.empty(); }
    bool has_costs() const { return !costs.empty(); }

    void require_policy() const {
        if (policy_pending_solve || policy.size() != horizon + 1)
            throw ValidationError({"policy marked \"solve\" has not been resolved; solve it first"});
    }
};

// X-marginal of a distribution over E
inline Dist state_marginal(const ModelSpec& m, const Dist& nu) {
    std::vector<double> out(m.num_states(), 0.0);
    for (std::size_t e = 0; e < m.pair_count(); ++e) out[m.pair_state(e)] += nu[e];
    return Dist(std::move(out));
}

inline Dist action_marginal(const ModelSpec& m, const Dist& nu) {
    std::vector<double> out(m.num_actions(), 0.0);
    for (std::size_t e = 0; e < m.pair_count(); ++e) out[m.pair_action(e)] += nu[e];
    return Dist(std::move(out));
}

namespace detail {

inline void softmax_inplace(std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (auto& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : logits) v /= sum;
}

}  // namespace detail

// Kernel from E = X x A to X at time t, evaluated at state marginal mu.
inline Kernel transition_kernel(const ModelSpec& m, const Dist& mu, std::size_t t) {
    if (t >= m.horizon) throw std::invalid_argument("transition_kernel: t must be < horizon");
    if (mu.size() != m.num_states()) throw std::invalid_argument("transition_kernel: mu size mismatch");
    const std::size_t nx = m.num_states(), na = m.num_actions();
    std::vector<double> rows;
    rows.reserve(nx * na * nx);
    std::vector<double> logits(nx);
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t a = 0; a < na; ++a) {
            for (std::size_t xp = 0; xp < nx; ++xp) {
                double v = m.base_logits[t][x][a][xp];
                if (m.mu_dependent()) {
                    const auto& w = m.mf_weights[t][x][a][xp];
                    for (std::size_t k = 0; k < nx; ++k) v += w[k] * mu[k];
                }
                logits[xp] = v;
            }
            detail::softmax_inplace(logits);
            rows.insert(rows.end(), logits.begin(), logits.end());
        }
    }
    return Kernel(nx * na, nx, std::move(rows));
}

// Composite kernel on pairs: state transition at the X-marginal of nu followed
// by the time-(t+1) policy.
inline Kernel pair_kernel(const ModelSpec& m, const Dist& nu, std::size_t t) {
    if (t + 1 > m.horizon) throw std::invalid_argument("pair_kernel: t+1 must be <= horizon");
    m.require_policy();
    const std::size_t ne = m.pair_count(), nx = m.num_states(), na = m.num_actions();
    Kernel state_k = transition_kernel(m, state_marginal(m, nu), t);
    const Kernel& pi_next = m.policy[t + 1];
    std::vector<double> rows(ne * ne, 0.0);
    for (std::size_t e = 0; e < ne; ++e) {
        auto sr = state_k.row(e);
        for (std::size_t xp = 0; xp < nx; ++xp) {
            auto pr = pi_next.row(xp);
            for (std::size_t ap = 0; ap < na; ++ap)
                rows[e * ne + m.pair_index(xp, ap)] = sr[xp] * pr[ap];
        }
    }
    return Kernel(ne, ne, std::move(rows));
}

// One step of the nonlinear flow map on pair distributions.
inline Dist flow_step(const ModelSpec& m, const Dist& nu, std::size_t t) {
    return pair_kernel(m, nu, t).apply(nu);
}

// nu(0) = mu0 (x) pi_0
inline Dist initial_pair_dist(const ModelSpec& m) {
    m.require_policy();
    std::vector<double> w(m.pair_count(), 0.0);
    const Kernel& pi0 = m.policy[0];
    for (std::size_t x = 0; x < m.num_states(); ++x) {
        auto pr = pi0.row(x);
        for (std::size_t a = 0; a < m.num_actions(); ++a) w[m.pair_index(x, a)] = m.mu0[x] * pr[a];
    }
    return Dist(std::move(w));
}

// Deterministic mean-field flow b(0..upto). The kernel's marginal argument is
// the flow's own current X-marginal.
inline Flow mean_field_flow(const ModelSpec& m, std::size_t upto) {
    if (upto > m.horizon) throw std::invalid_argument("mean_field_flow: upto must be <= horizon");
    Flow b;
    b.reserve(upto + 1);
    b.push_back(initial_pair_dist(m));
    for (std::size_t t = 0; t < upto; ++t) b.push_back(flow_step(m, b.back(), t));
    return b;
}

// Decoupled variant: the kernel's marginal argument at step t is the supplied
// nu[t]'s X-marginal instead of the flow's own.
inline Flow mean_field_flow_simplified(const ModelSpec& m, const Flow& nu, std::size_t upto) {
    if (upto > m.horizon) throw std::invalid_argument("mean_field_flow_simplified: upto must be <= horizon");
    if (nu.size() < upto) throw std::invalid_argument("mean_field_flow_simplified: nu too short");
    m.require_policy();
    Flow b;
    b.reserve(upto + 1);
    b.push_back(initial_pair_dist(m));
    for (std::size_t t = 0; t < upto; ++t) {
        Kernel state_k = transition_kernel(m, state_marginal(m, nu[t]), t);
        const std::size_t ne = m.pair_count(), nx = m.num_states(), na = m.num_actions();
        const Kernel& pi_next = m.policy[t + 1];
        std::vector<double> next(ne, 0.0);
        const Dist& cur = b.back();
        for (std::size_t e = 0; e < ne; ++e) {
            if (cur[e] == 0.0) continue;
            auto sr = state_k.row(e);
            for (std::size_t xp = 0; xp < nx; ++xp) {
                auto pr = pi_next.row(xp);
                for (std::size_t ap = 0; ap < na; ++ap)
                    next[m.pair_index(xp, ap)] += cur[e] * sr[xp] * pr[ap];
            }
        }
        b.push_back(Dist(std::move(next)));
    }
    return b;
}

// Per-stage cost c_t(x,a) + <cost_mf_weights[t][x][a], mu>
inline double stage_cost(const ModelSpec& m, std::size_t t, std::size_t x, std::size_t a, const Dist& mu) {
    double c = m.costs[t][x][a];
    if (!m.cost_mf_weights.empty()) {
        const auto& w = m.cost_mf_weights[t][x][a];
        for (std::size_t k = 0; k < m.num_states(); ++k) c += w[k] * mu[k];
    }
    return c;
}

}  // namespace mfgld
