// Static entropic bridge: minimize R(theta | reference) over couplings with
// prescribed marginals, by log-domain iterative proportional fitting.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mfgld/core.hpp"
#include "mfgld/entropy.hpp"

namespace mfgld {

struct BridgeResult {
    Coupling coupling;
    double value = 0.0;            // R(coupling | reference); +inf when infeasible
    std::size_t iterations = 0;
    double marginal_error = 0.0;   // max L1 marginal error at exit
    bool feasible = true;
    bool converged = true;
    double value_lower = 0.0;      // weak-duality bracket around the optimum
    double value_upper = 0.0;
};

inline constexpr double kBridgeTol = 1e-10;
inline constexpr std::size_t kBridgeMaxIter = 100000;

namespace detail {

inline double logsumexp(std::span<const double> v) {
    double mx = -kInf;
    for (double x : v) mx = std::max(mx, x);
    if (mx == -kInf) return -kInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

// Round a near-feasible coupling to exact marginals (scale rows, scale
// columns, then spread the leftover as a rank-one correction).
inline std::vector<double> round_to_marginals(const std::vector<double>& theta, std::size_t n, std::size_t mcols,
                                              const Dist& rho, const Dist& sigma) {
    std::vector<double> out = theta;
    for (std::size_t i = 0; i < n; ++i) {
        double rs = 0.0;
        for (std::size_t j = 0; j < mcols; ++j) rs += out[i * mcols + j];
        double sc = rs > 0.0 ? std::min(1.0, rho[i] / rs) : 0.0;
        for (std::size_t j = 0; j < mcols; ++j) out[i * mcols + j] *= sc;
    }
    for (std::size_t j = 0; j < mcols; ++j) {
        double cs = 0.0;
        for (std::size_t i = 0; i < n; ++i) cs += out[i * mcols + j];
        double sc = cs > 0.0 ? std::min(1.0, sigma[j] / cs) : 0.0;
        for (std::size_t i = 0; i < n; ++i) out[i * mcols + j] *= sc;
    }
    std::vector<double> er(n, 0.0), ec(mcols, 0.0);
    double tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double rs = 0.0;
        for (std::size_t j = 0; j < mcols; ++j) rs += out[i * mcols + j];
        er[i] = rho[i] - rs;
        tot += er[i];
    }
    for (std::size_t j = 0; j < mcols; ++j) {
        double cs = 0.0;
        for (std::size_t i = 0; i < n; ++i) cs += out[i * mcols + j];
        ec[j] = sigma[j] - cs;
    }
    if (tot > 0.0) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < mcols; ++j) out[i * mcols + j] += er[i] * ec[j] / tot;
    }
    return out;
}

}  // namespace detail

inline BridgeResult sinkhorn_bridge(const Coupling& reference, const Dist& rho, const Dist& sigma,
                                    double tol = kBridgeTol, std::size_t max_iter = kBridgeMaxIter) {
    const std::size_t n = reference.source_size(), mc = reference.target_size();
    if (rho.size() != n || sigma.size() != mc)
        throw std::invalid_argument("sinkhorn_bridge: marginal size mismatch");
    if (!(tol > 0.0)) throw std::invalid_argument("sinkhorn_bridge: tol must be positive");

    BridgeResult res;

    // absolute-continuity precheck: a charged row/column with a null reference
    // fiber makes the problem infeasible
    std::vector<double> ref_rows(n, 0.0), ref_cols(mc, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < mc; ++j) {
            ref_rows[i] += reference.at(i, j);
            ref_cols[j] += reference.at(i, j);
        }
    for (std::size_t i = 0; i < n; ++i)
        if (rho[i] > 0.0 && ref_rows[i] == 0.0) {
            res.feasible = false;
            res.value = res.value_lower = res.value_upper = kInf;
            res.coupling = reference;
            return res;
        }
    for (std::size_t j = 0; j < mc; ++j)
        if (sigma[j] > 0.0 && ref_cols[j] == 0.0) {
            res.feasible = false;
            res.value = res.value_lower = res.value_upper = kInf;
            res.coupling = reference;
            return res;
        }

    std::vector<double> lk(n * mc);
    for (std::size_t p = 0; p < n * mc; ++p)
        lk[p] = reference.flat()[p] > 0.0 ? std::log(reference.flat()[p]) : -kInf;

    auto infeasible = [&]() {
        res.feasible = false;
        res.value = res.value_lower = res.value_upper = kInf;
        res.coupling = reference;
        return res;
    };

    std::vector<double> f(n, 0.0), g(mc, 0.0), buf(std::max(n, mc));
    std::vector<double> theta(n * mc);
    double err = kInf;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            if (rho[i] == 0.0) {
                f[i] = -kInf;
                continue;
            }
            for (std::size_t j = 0; j < mc; ++j) buf[j] = lk[i * mc + j] + g[j];
            double lse = detail::logsumexp(std::span<const double>(buf).first(mc));
            // a charged row whose admissible columns all died is a support
            // pattern with no feasible coupling
            if (lse == -kInf) return infeasible();
            f[i] = std::log(rho[i]) - lse;
        }
        for (std::size_t j = 0; j < mc; ++j) {
            if (sigma[j] == 0.0) {
                g[j] = -kInf;
                continue;
            }
            for (std::size_t i = 0; i < n; ++i) buf[i] = lk[i * mc + j] + f[i];
            double lse = detail::logsumexp(std::span<const double>(buf).first(n));
            if (lse == -kInf) return infeasible();
            g[j] = std::log(sigma[j]) - lse;
        }
        double row_err = 0.0, col_err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double rs = 0.0;
            for (std::size_t j = 0; j < mc; ++j) {
                double lv = lk[i * mc + j] + f[i] + g[j];
                theta[i * mc + j] = lv == -kInf ? 0.0 : std::exp(lv);
                rs += theta[i * mc + j];
            }
            row_err += std::abs(rs - rho[i]);
        }
        for (std::size_t j = 0; j < mc; ++j) {
            double cs = 0.0;
            for (std::size_t i = 0; i < n; ++i) cs += theta[i * mc + j];
            col_err += std::abs(cs - sigma[j]);
        }
        err = std::max(row_err, col_err);
        if (err < tol) {
            ++it;
            break;
        }
    }

    res.iterations = it;
    res.marginal_error = err;
    res.converged = err < tol;

    // primal value of the returned iterate
    double val = 0.0;
    for (std::size_t p = 0; p < n * mc; ++p) {
        if (theta[p] == 0.0) continue;
        val += theta[p] * std::log(theta[p] / reference.flat()[p]);
    }
    if (val < 0.0 && val > -1e-12) val = 0.0;

    // weak-duality bracket: <rho,f> + <sigma,g> - log sum(K e^{f+g}) below,
    // value of the marginal-exact rounding above
    double lin = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (rho[i] > 0.0) lin += rho[i] * f[i];
    for (std::size_t j = 0; j < mc; ++j)
        if (sigma[j] > 0.0) lin += sigma[j] * g[j];
    std::vector<double> all(n * mc);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < mc; ++j) all[i * mc + j] = lk[i * mc + j] + f[i] + g[j];
    res.value_lower = lin - detail::logsumexp(all);

    std::vector<double> rounded = detail::round_to_marginals(theta, n, mc, rho, sigma);
    double ub = 0.0;
    for (std::size_t p = 0; p < n * mc; ++p) {
        if (rounded[p] == 0.0) continue;
        if (reference.flat()[p] <= 0.0) {
            ub = kInf;
            break;
        }
        ub += rounded[p] * std::log(rounded[p] / reference.flat()[p]);
    }
    if (ub < 0.0 && ub > -1e-12) ub = 0.0;
    res.value_upper = ub;

    if (res.converged) {
        res.value = val;
        double mass = 0.0;
        for (double x : theta) mass += x;
        for (auto& x : theta) x /= mass;
        res.coupling = Coupling(n, mc, std::move(theta));
    } else {
        // report the certified upper end; the bracket carries the uncertainty
        res.value = ub;
        res.coupling = Coupling(n, mc, detail::round_to_marginals(theta, n, mc, rho, sigma));
    }
    return res;
}

}  // namespace mfgld
