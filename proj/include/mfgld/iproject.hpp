// Exact I-projection onto time-marginal constraints, solved as a convex
// program over the full joint simplex on E^{T+1}. Desk-scale test oracle:
// projected gradient with Dykstra feasibility projections and a weak-duality
// gap certificate. Independent of the stepwise bridge route.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mfgld/core.hpp"
#include "mfgld/path_measure.hpp"

namespace mfgld {

struct IProjectResult {
    double value = kInf;
    PathTensor argmin;
    std::size_t iterations = 0;
    double gap = kInf;         // certified optimality gap at exit
    double feas_error = kInf;  // max constraint residual of the returned point
    bool feasible = true;
    bool converged = false;
};

inline constexpr std::size_t kIProjectMaxCells = 10000;

namespace detail {

// symmetric eigen-decomposition by cyclic Jacobi; enough for the tiny Gram
// matrices that arise here
inline void jacobi_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& evals,
                         std::vector<double>& evecs) {
    evecs.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) evecs[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = evecs[k * n + p], vkq = evecs[k * n + q];
                    evecs[k * n + p] = c * vkp - s * vkq;
                    evecs[k * n + q] = s * vkp + c * vkq;
                }
            }
    }
    evals.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) evals[i] = a[i * n + i];
}

// marginal-constraint operator restricted to the reference support:
// (A x)[(t,e)] = sum over support paths with z_t = e
struct MarginalOp {
    std::size_t space = 0, steps = 0, cells = 0;
    std::vector<char> support;

    std::size_t rows() const { return (steps + 1) * space; }

    std::size_t coord(std::size_t idx, std::size_t t) const {
        for (std::size_t k = 0; k < t; ++k) idx /= space;
        return idx % space;
    }

    void apply(const std::vector<double>& x, std::vector<double>& out) const {
        out.assign(rows(), 0.0);
        std::size_t stride = 1;
        for (std::size_t t = 0; t <= steps; ++t) {
            for (std::size_t idx = 0; idx < cells; ++idx)
                if (support[idx]) out[t * space + (idx / stride) % space] += x[idx];
            stride *= space;
        }
    }

    void apply_transpose(const std::vector<double>& y, std::vector<double>& out) const {
        out.assign(cells, 0.0);
        std::size_t stride = 1;
        for (std::size_t t = 0; t <= steps; ++t) {
            for (std::size_t idx = 0; idx < cells; ++idx)
                if (support[idx]) out[idx] += y[t * space + (idx / stride) % space];
            stride *= space;
        }
    }
};

// pseudo-inverse solve of (A A^T) y = r
struct GramSolver {
    std::size_t n = 0;
    std::vector<double> evals, evecs;

    void init(const MarginalOp& op, bool full_support) {
        n = op.rows();
        std::vector<double> g(n * n, 0.0);
        if (full_support) {
            double cells = static_cast<double>(op.cells);
            double same = cells / static_cast<double>(op.space);
            double cross = op.steps == 0 ? 0.0 : same / static_cast<double>(op.space);
            for (std::size_t t = 0; t <= op.steps; ++t)
                for (std::size_t e = 0; e < op.space; ++e)
                    for (std::size_t t2 = 0; t2 <= op.steps; ++t2)
                        for (std::size_t e2 = 0; e2 < op.space; ++e2)
                            g[(t * op.space + e) * n + (t2 * op.space + e2)] =
                                t == t2 ? (e == e2 ? same : 0.0) : cross;
        } else {
            for (std::size_t idx = 0; idx < op.cells; ++idx) {
                if (!op.support[idx]) continue;
                for (std::size_t t = 0; t <= op.steps; ++t) {
                    std::size_t r1 = t * op.space + op.coord(idx, t);
                    for (std::size_t t2 = 0; t2 <= op.steps; ++t2) g[r1 * n + t2 * op.space + op.coord(idx, t2)] += 1.0;
                }
            }
        }
        jacobi_eigen(g, n, evals, evecs);
    }

    void solve(const std::vector<double>& r, std::vector<double>& out) const {
        out.assign(n, 0.0);
        double emax = 0.0;
        for (double e : evals) emax = std::max(emax, std::abs(e));
        double cut = emax * 1e-12;
        for (std::size_t k = 0; k < n; ++k) {
            if (std::abs(evals[k]) <= cut) continue;
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += evecs[i * n + k] * r[i];
            dot /= evals[k];
            for (std::size_t i = 0; i < n; ++i) out[i] += evecs[i * n + k] * dot;
        }
    }
};

}  // namespace detail

// Minimize R(Lambda | reference) over joints on E^{T+1} whose time marginals
// equal the given flow. Returns +inf when some marginal charges a fiber the
// reference gives zero mass.
inline IProjectResult i_project_exact(const MarkovPathMeasure& reference, const Flow& marginals,
                                      std::size_t max_iter = 50000, double gap_tol = 1e-10) {
    reference.check();
    if (marginals.size() != reference.steps() + 1)
        throw std::invalid_argument("i_project_exact: marginal count mismatch");
    const std::size_t space = reference.space_size();
    const std::size_t cells = PathTensor::cell_count(space, reference.steps());
    if (cells > kIProjectMaxCells) throw std::invalid_argument("i_project_exact: instance too large");

    PathTensor ref = expand(reference);
    detail::MarginalOp op;
    op.space = space;
    op.steps = reference.steps();
    op.cells = cells;
    op.support.assign(cells, 0);
    bool full_support = true;
    for (std::size_t p = 0; p < cells; ++p) {
        op.support[p] = ref.w[p] > 0.0 ? 1 : 0;
        full_support = full_support && op.support[p];
    }

    IProjectResult res;

    // feasibility precheck on single fibers
    {
        std::vector<double> ones(cells, 1.0), fiber;
        op.apply(ones, fiber);
        for (std::size_t t = 0; t <= op.steps; ++t)
            for (std::size_t e = 0; e < space; ++e)
                if (marginals[t][e] > 0.0 && fiber[t * space + e] == 0.0) {
                    res.feasible = false;
                    res.value = kInf;
                    return res;
                }
    }

    std::vector<double> b(op.rows());
    for (std::size_t t = 0; t <= op.steps; ++t)
        for (std::size_t e = 0; e < space; ++e) b[t * space + e] = marginals[t][e];

    detail::GramSolver gram;
    gram.init(op, full_support);

    auto project_affine = [&](std::vector<double>& x) {
        std::vector<double> ax, r, y, corr;
        op.apply(x, ax);
        r.resize(op.rows());
        for (std::size_t i = 0; i < op.rows(); ++i) r[i] = ax[i] - b[i];
        gram.solve(r, y);
        op.apply_transpose(y, corr);
        for (std::size_t p = 0; p < cells; ++p)
            if (op.support[p]) x[p] -= corr[p];
    };

    // Dykstra between the affine subspace and the nonnegative orthant, with
    // off-support cells pinned to zero
    auto project_feasible = [&](std::vector<double> x) {
        for (std::size_t p = 0; p < cells; ++p)
            if (!op.support[p]) x[p] = 0.0;
        std::vector<double> q(cells, 0.0), prev(cells);
        for (int k = 0; k < 500; ++k) {
            prev = x;
            project_affine(x);
            double delta = 0.0;
            for (std::size_t p = 0; p < cells; ++p) {
                if (!op.support[p]) {
                    x[p] = 0.0;
                    continue;
                }
                double xq = x[p] + q[p];
                double clipped = xq > 0.0 ? xq : 0.0;
                q[p] = xq - clipped;
                delta = std::max(delta, std::abs(clipped - prev[p]));
                x[p] = clipped;
            }
            if (delta < 1e-15) break;
        }
        return x;
    };

    // independent interior starting point: the product of the target marginals
    std::vector<double> x(cells, 1.0);
    {
        std::size_t stride = 1;
        for (std::size_t t = 0; t <= op.steps; ++t) {
            for (std::size_t idx = 0; idx < cells; ++idx) x[idx] *= marginals[t][(idx / stride) % space];
            stride *= space;
        }
    }
    x = project_feasible(std::move(x));

    auto objective = [&](const std::vector<double>& v) {
        double f = 0.0;
        for (std::size_t p = 0; p < cells; ++p) {
            if (v[p] <= 0.0) continue;
            if (ref.w[p] <= 0.0) return kInf;
            f += v[p] * std::log(v[p] / ref.w[p]);
        }
        return f;
    };

    auto gradient = [&](const std::vector<double>& v, std::vector<double>& gr) {
        gr.resize(cells);
        for (std::size_t p = 0; p < cells; ++p) {
            if (!op.support[p]) {
                gr[p] = 0.0;
                continue;
            }
            double vp = v[p] > 1e-300 ? v[p] : 1e-300;
            gr[p] = std::log(vp / ref.w[p]) + 1.0;
        }
    };

    auto dual_bound = [&](const std::vector<double>& gr) {
        // least-squares multipliers from the current gradient, then the
        // concave dual  <lambda,b> - log sum(ref * exp(A^T lambda))
        std::vector<double> ag, lam, atl;
        op.apply(gr, ag);
        gram.solve(ag, lam);
        op.apply_transpose(lam, atl);
        double lin = 0.0;
        for (std::size_t i = 0; i < op.rows(); ++i) lin += lam[i] * b[i];
        double mx = -kInf;
        for (std::size_t p = 0; p < cells; ++p)
            if (op.support[p]) mx = std::max(mx, std::log(ref.w[p]) + atl[p]);
        double s = 0.0;
        for (std::size_t p = 0; p < cells; ++p)
            if (op.support[p]) s += std::exp(std::log(ref.w[p]) + atl[p] - mx);
        return lin - (mx + std::log(s));
    };

    double f = objective(x);
    std::vector<double> g, xprev, gprev, cand;
    gradient(x, g);
    double step = 0.5;
    std::size_t it = 0;
    double best_gap = kInf;
    for (; it < max_iter; ++it) {
        double gap = f - dual_bound(g);
        best_gap = std::min(best_gap, gap);
        if (gap <= gap_tol) {
            res.converged = true;
            break;
        }
        // Barzilai-Borwein step with a sufficient-decrease backtrack
        if (!xprev.empty()) {
            double num = 0.0, den = 0.0;
            for (std::size_t p = 0; p < cells; ++p) {
                double dx = x[p] - xprev[p], dg = g[p] - gprev[p];
                num += dx * dx;
                den += dx * dg;
            }
            if (den > 1e-300) step = std::min(1e3, std::max(1e-9, num / den));
        }
        xprev = x;
        gprev = g;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            cand.resize(cells);
            for (std::size_t p = 0; p < cells; ++p) cand[p] = x[p] - step * g[p];
            cand = project_feasible(std::move(cand));
            double fc = objective(cand);
            double moved = 0.0;
            for (std::size_t p = 0; p < cells; ++p) moved += (cand[p] - x[p]) * (cand[p] - x[p]);
            if (fc <= f - 1e-4 * moved / std::max(step, 1e-300)) {
                x = std::move(cand);
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        gradient(x, g);
        if (!accepted) {
            double gap2 = f - dual_bound(g);
            best_gap = std::min(best_gap, gap2);
            res.converged = best_gap <= gap_tol * 10.0;
            break;
        }
    }

    std::vector<double> ax;
    op.apply(x, ax);
    double feas = 0.0;
    for (std::size_t i = 0; i < op.rows(); ++i) feas = std::max(feas, std::abs(ax[i] - b[i]));

    res.value = f;
    res.iterations = it;
    res.gap = best_gap;
    res.feas_error = feas;
    res.argmin = PathTensor{space, op.steps, std::move(x)};
    return res;
}

}  // namespace mfgld
