// Core finite-space probability types: Space, Dist, Kernel, Flow.
// All types are immutable values after construction; operations are pure.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgld {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Construction tolerances. Entries below -kNegEntryTol are rejected outright;
// mass is renormalized when |sum - 1| <= kMassTol and rejected beyond that.
inline constexpr double kNegEntryTol = 1e-12;
inline constexpr double kMassTol = 1e-9;

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> violations)
        : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out += "; ";
            out += v[i];
        }
        return out.empty() ? std::string("validation failed") : out;
    }

    std::vector<std::string> violations_;
};

// Finite index set with distinct string labels.
struct Space {
    std::vector<std::string> labels;

    Space() = default;
    explicit Space(std::vector<std::string> ls) : labels(std::move(ls)) {
        if (labels.empty()) throw ValidationError({"space must have at least one label"});
        auto sorted = labels;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw ValidationError({"space labels must be distinct"});
    }

    static Space indexed(std::size_t n, const std::string& prefix = "s") {
        std::vector<std::string> ls;
        ls.reserve(n);
        for (std::size_t i = 0; i < n; ++i) ls.push_back(prefix + std::to_string(i));
        return Space(std::move(ls));
    }

    std::size_t size() const { return labels.size(); }

    bool operator==(const Space&) const = default;
};

// Probability vector over a finite space. Renormalized at construction;
// rejects entries below -kNegEntryTol and mass off by more than kMassTol.
class Dist {
public:
    Dist() = default;

    explicit Dist(std::vector<double> w, const std::string& where = "dist") : w_(std::move(w)) {
        if (w_.empty()) throw ValidationError({where + ": empty weight vector"});
        double sum = 0.0;
        for (std::size_t i = 0; i < w_.size(); ++i) {
            if (!(w_[i] > -kNegEntryTol) || !std::isfinite(w_[i]))
                throw ValidationError({where + "[" + std::to_string(i) + "]: negative or non-finite weight " +
                                       std::to_string(w_[i])});
            if (w_[i] < 0.0) w_[i] = 0.0;
            sum += w_[i];
        }
        if (std::abs(sum - 1.0) > kMassTol)
            throw ValidationError({where + ": row sum " + std::to_string(sum) + " != 1"});
        for (auto& x : w_) x /= sum;
    }

    static Dist uniform(std::size_t n) {
        return Dist(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static Dist delta(std::size_t n, std::size_t i) {
        std::vector<double> w(n, 0.0);
        w.at(i) = 1.0;
        return Dist(std::move(w));
    }

    std::size_t size() const { return w_.size(); }
    double operator[](std::size_t i) const { return w_[i]; }
    std::span<const double> weights() const { return w_; }
    const std::vector<double>& vec() const { return w_; }

    bool operator==(const Dist&) const = default;

private:
    std::vector<double> w_;
};

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("l1_distance: size mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

inline double l1_distance(const Dist& a, const Dist& b) {
    return l1_distance(a.weights(), b.weights());
}

// Row-stochastic matrix between finite spaces. Every row is a valid Dist.
class Kernel {
public:
    Kernel() = default;

    Kernel(std::size_t n_src, std::size_t n_dst, std::vector<double> p, const std::string& where = "kernel")
        : n_src_(n_src), n_dst_(n_dst), p_(std::move(p)) {
        if (p_.size() != n_src_ * n_dst_) throw ValidationError({where + ": shape mismatch"});
        for (std::size_t i = 0; i < n_src_; ++i) {
            Dist row(std::vector<double>(p_.begin() + static_cast<std::ptrdiff_t>(i * n_dst_),
                                         p_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n_dst_)),
                     where + "[" + std::to_string(i) + "]");
            std::copy(row.weights().begin(), row.weights().end(), p_.begin() + static_cast<std::ptrdiff_t>(i * n_dst_));
        }
    }

    static Kernel from_rows(const std::vector<std::vector<double>>& rows, const std::string& where = "kernel") {
        if (rows.empty()) throw ValidationError({where + ": no rows"});
        std::size_t n_dst = rows.front().size();
        std::vector<double> flat;
        flat.reserve(rows.size() * n_dst);
        for (const auto& r : rows) {
            if (r.size() != n_dst) throw ValidationError({where + ": ragged rows"});
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return Kernel(rows.size(), n_dst, std::move(flat), where);
    }

    static Kernel identity(std::size_t n) {
        std::vector<double> p(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 1.0;
        return Kernel(n, n, std::move(p));
    }

    static Kernel constant_rows(std::size_t n_src, const Dist& row) {
        std::vector<double> p;
        p.reserve(n_src * row.size());
        for (std::size_t i = 0; i < n_src; ++i)
            p.insert(p.end(), row.weights().begin(), row.weights().end());
        return Kernel(n_src, row.size(), std::move(p));
    }

    std::size_t source_size() const { return n_src_; }
    std::size_t target_size() const { return n_dst_; }

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(p_).subspan(i * n_dst_, n_dst_);
    }
    double at(std::size_t i, std::size_t j) const { return p_[i * n_dst_ + j]; }
    const std::vector<double>& flat() const { return p_; }

    Dist row_dist(std::size_t i) const {
        auto r = row(i);
        return Dist(std::vector<double>(r.begin(), r.end()));
    }

    // mu * K, mu a row vector over the source space
    Dist apply(const Dist& mu) const {
        if (mu.size() != n_src_) throw std::invalid_argument("kernel apply: size mismatch");
        std::vector<double> out(n_dst_, 0.0);
        for (std::size_t i = 0; i < n_src_; ++i) {
            double m = mu[i];
            if (m == 0.0) continue;
            auto r = row(i);
            for (std::size_t j = 0; j < n_dst_; ++j) out[j] += m * r[j];
        }
        return Dist(std::move(out));
    }

    bool operator==(const Kernel&) const = default;

private:
    std::size_t n_src_ = 0;
    std::size_t n_dst_ = 0;
    std::vector<double> p_;
};

// Time-indexed tuple of distributions, t = 0..T.
using Flow = std::vector<Dist>;

inline double max_l1_distance(const Flow& a, const Flow& b) {
    if (a.size() != b.size()) throw std::invalid_argument("flow distance: length mismatch");
    double d = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) d = std::max(d, l1_distance(a[t], b[t]));
    return d;
}

}  // namespace mfgld
