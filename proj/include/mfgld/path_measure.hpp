// Path-space measures on E^{T+1}: Markov factorizations, dense joints at desk
// scale, and the Markov reduction that preserves pair marginals.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mfgld/core.hpp"
#include "mfgld/entropy.hpp"

namespace mfgld {

// Initial distribution plus a kernel per step, all on a common finite space.
struct MarkovPathMeasure {
    Dist initial;
    std::vector<Kernel> kernels;

    std::size_t steps() const { return kernels.size(); }
    std::size_t space_size() const { return initial.size(); }

    void check() const {
        for (const auto& k : kernels)
            if (k.source_size() != initial.size() || k.target_size() != initial.size())
                throw std::invalid_argument("markov path measure: kernel shape mismatch");
    }

    Flow time_marginals() const {
        Flow out;
        out.reserve(steps() + 1);
        out.push_back(initial);
        for (const auto& k : kernels) out.push_back(k.apply(out.back()));
        return out;
    }
};

// Dense joint measure on E^{T+1}; the time-0 coordinate is the least
// significant digit of the flat index.
struct PathTensor {
    std::size_t space = 0;  // |E|
    std::size_t steps = 0;  // T
    std::vector<double> w;  // size space^(steps+1)

    std::size_t times() const { return steps + 1; }
    std::size_t size() const { return w.size(); }

    static std::size_t cell_count(std::size_t space, std::size_t steps) {
        std::size_t n = 1;
        for (std::size_t t = 0; t <= steps; ++t) {
            if (n > (std::size_t(1) << 40) / space) throw std::invalid_argument("path tensor too large");
            n *= space;
        }
        return n;
    }

    std::size_t coord(std::size_t flat, std::size_t t) const {
        for (std::size_t k = 0; k < t; ++k) flat /= space;
        return flat % space;
    }
};

inline PathTensor expand(const MarkovPathMeasure& m) {
    m.check();
    PathTensor p;
    p.space = m.space_size();
    p.steps = m.steps();
    PathTensor::cell_count(p.space, p.steps);  // size guard
    // build iteratively: prefix measures over E^{t+1}
    std::vector<double> cur(m.initial.weights().begin(), m.initial.weights().end());
    std::size_t cur_len = p.space;
    for (const auto& k : m.kernels) {
        std::vector<double> next(cur_len * p.space, 0.0);
        for (std::size_t idx = 0; idx < cur_len; ++idx) {
            if (cur[idx] == 0.0) continue;
            std::size_t last = idx / (cur_len / p.space);
            auto row = k.row(last);
            for (std::size_t z = 0; z < p.space; ++z) next[z * cur_len + idx] = cur[idx] * row[z];
        }
        cur = std::move(next);
        cur_len *= p.space;
    }
    p.w = std::move(cur);
    return p;
}

inline Flow time_marginals(const PathTensor& p) {
    Flow out;
    out.reserve(p.times());
    for (std::size_t t = 0; t < p.times(); ++t) {
        std::vector<double> m(p.space, 0.0);
        for (std::size_t idx = 0; idx < p.size(); ++idx) m[p.coord(idx, t)] += p.w[idx];
        out.push_back(Dist(std::move(m)));
    }
    return out;
}

// joint of (z(t), z(t+1))
inline Coupling pair_marginal(const PathTensor& p, std::size_t t) {
    if (t + 1 > p.steps) throw std::invalid_argument("pair_marginal: t out of range");
    std::vector<double> m(p.space * p.space, 0.0);
    for (std::size_t idx = 0; idx < p.size(); ++idx)
        m[p.coord(idx, t) * p.space + p.coord(idx, t + 1)] += p.w[idx];
    return Coupling(p.space, p.space, std::move(m));
}

inline double relative_entropy(const PathTensor& p, const PathTensor& q) {
    if (p.space != q.space || p.steps != q.steps)
        throw std::invalid_argument("relative_entropy: path tensor shape mismatch");
    return relative_entropy(std::span<const double>(p.w), std::span<const double>(q.w));
}

// Markov measure with the same initial marginal and the same consecutive-pair
// conditionals. Preserves every single-time and consecutive-pair marginal and
// never increases relative entropy to a Markov reference.
inline MarkovPathMeasure markovianize(const PathTensor& p) {
    MarkovPathMeasure m;
    Flow marg = time_marginals(p);
    m.initial = marg[0];
    for (std::size_t t = 0; t + 1 <= p.steps; ++t) {
        Coupling pair = pair_marginal(p, t);
        std::vector<double> rows(p.space * p.space, 0.0);
        for (std::size_t z = 0; z < p.space; ++z) {
            double mass = marg[t][z];
            if (mass > 0.0) {
                for (std::size_t zp = 0; zp < p.space; ++zp) rows[z * p.space + zp] = pair.at(z, zp) / mass;
            } else {
                for (std::size_t zp = 0; zp < p.space; ++zp) rows[z * p.space + zp] = 1.0 / static_cast<double>(p.space);
            }
        }
        m.kernels.push_back(Kernel(p.space, p.space, std::move(rows)));
    }
    return m;
}

}  // namespace mfgld
