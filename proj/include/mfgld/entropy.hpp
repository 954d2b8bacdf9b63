// Relative entropy and couplings on finite spaces.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfgld/core.hpp"

namespace mfgld {

// sum p log(p/q) with 0 log(0/q) = 0; +inf when p charges a q-null point.
inline double relative_entropy(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("relative_entropy: dimension mismatch");
    double r = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] <= 0.0) return kInf;
        r += p[i] * std::log(p[i] / q[i]);
    }
    // rounding can push the sum a hair below zero when p ~ q
    return r < 0.0 && r > -1e-12 ? 0.0 : r;
}

inline double relative_entropy(const Dist& p, const Dist& q) {
    return relative_entropy(p.weights(), q.weights());
}

// Joint measure on a product of two finite spaces; total mass 1.
class Coupling {
public:
    Coupling() = default;

    Coupling(std::size_t n_src, std::size_t n_dst, std::vector<double> w, const std::string& where = "coupling")
        : n_src_(n_src), n_dst_(n_dst), w_(std::move(w)) {
        if (w_.size() != n_src_ * n_dst_) throw ValidationError({where + ": shape mismatch"});
        double sum = 0.0;
        for (std::size_t i = 0; i < w_.size(); ++i) {
            if (!(w_[i] > -kNegEntryTol) || !std::isfinite(w_[i]))
                throw ValidationError({where + ": negative or non-finite entry at flat index " + std::to_string(i)});
            if (w_[i] < 0.0) w_[i] = 0.0;
            sum += w_[i];
        }
        if (std::abs(sum - 1.0) > kMassTol) throw ValidationError({where + ": total mass " + std::to_string(sum) + " != 1"});
        for (auto& x : w_) x /= sum;
    }

    static Coupling from_rows(const std::vector<std::vector<double>>& rows, const std::string& where = "coupling") {
        std::size_t n_dst = rows.at(0).size();
        std::vector<double> flat;
        flat.reserve(rows.size() * n_dst);
        for (const auto& r : rows) {
            if (r.size() != n_dst) throw ValidationError({where + ": ragged rows"});
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return Coupling(rows.size(), n_dst, std::move(flat), where);
    }

    std::size_t source_size() const { return n_src_; }
    std::size_t target_size() const { return n_dst_; }
    double at(std::size_t i, std::size_t j) const { return w_[i * n_dst_ + j]; }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(w_).subspan(i * n_dst_, n_dst_);
    }
    const std::vector<double>& flat() const { return w_; }

    std::vector<double> source_marginal() const {
        std::vector<double> m(n_src_, 0.0);
        for (std::size_t i = 0; i < n_src_; ++i)
            for (std::size_t j = 0; j < n_dst_; ++j) m[i] += at(i, j);
        return m;
    }

    std::vector<double> target_marginal() const {
        std::vector<double> m(n_dst_, 0.0);
        for (std::size_t i = 0; i < n_src_; ++i)
            for (std::size_t j = 0; j < n_dst_; ++j) m[j] += at(i, j);
        return m;
    }

    bool operator==(const Coupling&) const = default;

private:
    std::size_t n_src_ = 0;
    std::size_t n_dst_ = 0;
    std::vector<double> w_;
};

// joint(z, z') = nu(z) * kappa(z'|z); source marginal is nu exactly.
inline Coupling joint_from_kernel(const Dist& nu, const Kernel& kappa) {
    if (nu.size() != kappa.source_size()) throw std::invalid_argument("joint_from_kernel: size mismatch");
    std::vector<double> w(kappa.source_size() * kappa.target_size());
    for (std::size_t i = 0; i < kappa.source_size(); ++i) {
        auto r = kappa.row(i);
        for (std::size_t j = 0; j < kappa.target_size(); ++j) w[i * kappa.target_size() + j] = nu[i] * r[j];
    }
    return Coupling(kappa.source_size(), kappa.target_size(), std::move(w));
}

struct Reversal {
    Kernel backward;      // target -> source
    Dist target_marginal;
};

// Bayes reversal of a joint: backward(z|z') = theta(z,z') / sigma(z').
// Rows at sigma-null targets are set to uniform; any stochastic completion
// there leaves every entropy computed from the reversal unchanged.
inline Reversal reverse_kernel(const Coupling& theta) {
    const std::size_t ns = theta.source_size(), nt = theta.target_size();
    std::vector<double> sigma = theta.target_marginal();
    std::vector<double> rows(nt * ns, 0.0);
    for (std::size_t j = 0; j < nt; ++j) {
        if (sigma[j] > 0.0) {
            for (std::size_t i = 0; i < ns; ++i) rows[j * ns + i] = theta.at(i, j) / sigma[j];
        } else {
            for (std::size_t i = 0; i < ns; ++i) rows[j * ns + i] = 1.0 / static_cast<double>(ns);
        }
    }
    return Reversal{Kernel(nt, ns, std::move(rows)), Dist(std::move(sigma))};
}

inline double relative_entropy(const Coupling& p, const Coupling& q) {
    if (p.source_size() != q.source_size() || p.target_size() != q.target_size())
        throw std::invalid_argument("relative_entropy: coupling shape mismatch");
    return relative_entropy(std::span<const double>(p.flat()), std::span<const double>(q.flat()));
}

}  // namespace mfgld
