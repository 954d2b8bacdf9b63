// Serialization: rate reports and flows as JSON ("inf" for +infinity), curves
// as CSV with full round-trip precision, run manifests, and the compact
// binary trace layout.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfgld/core.hpp"
#include "mfgld/model.hpp"
#include "mfgld/rates.hpp"
#include "mfgld/simulate.hpp"
#include "mfgld/version.hpp"

namespace mfgld {

// shortest-width exact decimal for a double; stable across runs
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline nlohmann::json extended_to_json(double v) {
    if (v == kInf) return "inf";
    return v;
}

inline double extended_from_json(const nlohmann::json& j) {
    if (j.is_string() && j.get<std::string>() == "inf") return kInf;
    return j.get<double>();
}

inline nlohmann::json to_json(const RateReport& r) {
    nlohmann::json terms = nlohmann::json::array();
    for (double t : r.terms) terms.push_back(extended_to_json(t));
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : r.steps)
        steps.push_back({{"iterations", s.iterations},
                         {"marginal_error", s.marginal_error},
                         {"converged", s.converged},
                         {"value_lower", extended_to_json(s.lower)},
                         {"value_upper", extended_to_json(s.upper)}});
    return {{"value", extended_to_json(r.value)},
            {"terms", std::move(terms)},
            {"steps", std::move(steps)},
            {"converged", r.converged}};
}

inline nlohmann::json flow_to_json(const Flow& f) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& d : f) out.push_back(d.vec());
    return out;
}

inline Flow flow_from_json(const nlohmann::json& j, const std::string& where = "gamma") {
    if (!j.is_array() || j.empty()) throw ValidationError({where + ": expected non-empty array of distributions"});
    Flow f;
    for (std::size_t t = 0; t < j.size(); ++t)
        f.push_back(Dist(j[t].get<std::vector<double>>(), where + "[" + std::to_string(t) + "]"));
    return f;
}

inline nlohmann::json policy_to_json(const std::vector<Kernel>& policy) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& k : policy) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t x = 0; x < k.source_size(); ++x) {
            auto r = k.row(x);
            rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
        out.push_back(std::move(rows));
    }
    return out;
}

inline std::vector<Kernel> policy_from_json(const nlohmann::json& j) {
    std::vector<Kernel> policy;
    for (std::size_t t = 0; t < j.size(); ++t)
        policy.push_back(Kernel::from_rows(j[t].get<std::vector<std::vector<double>>>(),
                                           "policy[" + std::to_string(t) + "]"));
    return policy;
}

inline nlohmann::json path_measure_to_json(const MarkovPathMeasure& m) {
    nlohmann::json kernels = nlohmann::json::array();
    for (const auto& k : m.kernels) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < k.source_size(); ++i) {
            auto r = k.row(i);
            rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
        kernels.push_back(std::move(rows));
    }
    return {{"initial", m.initial.vec()}, {"kernels", std::move(kernels)}};
}

inline MarkovPathMeasure path_measure_from_json(const nlohmann::json& j) {
    MarkovPathMeasure m;
    m.initial = Dist(j.at("initial").get<std::vector<double>>(), "initial");
    for (std::size_t t = 0; t < j.at("kernels").size(); ++t)
        m.kernels.push_back(Kernel::from_rows(j["kernels"][t].get<std::vector<std::vector<double>>>(),
                                              "kernels[" + std::to_string(t) + "]"));
    m.check();
    return m;
}

// FNV-1a over the canonical (key-sorted) dump of the config
inline std::uint64_t config_hash(const nlohmann::json& cfg) {
    std::string s = cfg.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct RunManifest {
    std::string command_line;
    std::string config_hash_hex;
    std::uint64_t master_seed = 0;
    double wall_time_s = 0.0;
    std::vector<std::string> outputs;

    nlohmann::json to_json() const {
        return {{"tool_version", kToolVersion},
                {"command_line", command_line},
                {"config_hash", config_hash_hex},
                {"master_seed", master_seed},
                {"wall_time_s", wall_time_s},
                {"outputs", outputs}};
    }
};

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

inline std::string csv_empirical_flow(const ModelSpec& m, const EmpiricalFlow& flow) {
    std::string s = "t";
    for (std::size_t e = 0; e < m.pair_count(); ++e) s += "," + m.pair_label(e);
    s += "\n";
    for (std::size_t t = 0; t < flow.counts.size(); ++t) {
        s += std::to_string(t);
        Dist d = flow.dist_at(t);
        for (std::size_t e = 0; e < d.size(); ++e) s += "," + format_double(d[e]);
        s += "\n";
    }
    return s;
}

inline std::string csv_prob(const ProbEstimate& est) {
    std::string s = "N,reps,hits,p_hat,wilson_lo,wilson_hi\n";
    s += std::to_string(est.n_particles) + "," + std::to_string(est.reps) + "," + std::to_string(est.hits) + "," +
         format_double(est.p_hat) + "," + format_double(est.ci.lo) + "," + format_double(est.ci.hi) + "\n";
    return s;
}

inline std::string csv_slope_table(const SlopeTable& table) {
    std::string s = "N,reps,hits,p_hat,wilson_lo,wilson_hi,slope,slope_lo,slope_hi,usable\n";
    for (const auto& r : table.rows) {
        s += std::to_string(r.n_particles) + "," + std::to_string(r.reps) + "," + std::to_string(r.hits) + "," +
             format_double(r.p_hat) + "," + format_double(r.ci.lo) + "," + format_double(r.ci.hi) + "," +
             format_double(r.slope) + "," + format_double(r.slope_lo) + "," + format_double(r.slope_hi) + "," +
             (r.usable ? "1" : "0") + "\n";
    }
    return s;
}

inline std::string csv_lln(const std::vector<LlnRow>& rows) {
    std::string s = "N,mean_l1_error\n";
    for (const auto& r : rows) s += std::to_string(r.n_particles) + "," + format_double(r.mean_l1) + "\n";
    return s;
}

// ---------------------------------------------------------------------------
// Binary trace layout: magic "MFGT", u32 version, u64 seed, u64 replication,
// u64 config hash, u64 N, u64 horizon, u8 variant, then states and actions as
// u32 row-major [particle][time], then the per-role noise tensors as f64.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void put_raw(std::string& s, const T& v) {
    s.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void put_vec(std::string& s, const std::vector<T>& v) {
    s.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
}

template <typename T>
T get_raw(const std::string& s, std::size_t& off) {
    if (off + sizeof(T) > s.size()) throw std::runtime_error("trace file truncated");
    T v;
    std::memcpy(&v, s.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

template <typename T>
void get_vec(const std::string& s, std::size_t& off, std::vector<T>& v, std::size_t count) {
    if (off + count * sizeof(T) > s.size()) throw std::runtime_error("trace file truncated");
    v.resize(count);
    std::memcpy(v.data(), s.data() + off, count * sizeof(T));
    off += count * sizeof(T);
}

}  // namespace detail

inline std::string trace_to_bytes(const EnsembleTrace& tr, std::uint64_t cfg_hash) {
    std::string s;
    s += "MFGT";
    detail::put_raw<std::uint32_t>(s, 1);
    detail::put_raw<std::uint64_t>(s, tr.seed);
    detail::put_raw<std::uint64_t>(s, tr.replication);
    detail::put_raw<std::uint64_t>(s, cfg_hash);
    detail::put_raw<std::uint64_t>(s, tr.particles);
    detail::put_raw<std::uint64_t>(s, tr.horizon);
    detail::put_raw<std::uint8_t>(s, tr.variant == Variant::OwnState ? 0 : 1);
    detail::put_vec(s, tr.states);
    detail::put_vec(s, tr.actions);
    detail::put_vec(s, tr.noise_state);
    detail::put_vec(s, tr.noise_action);
    detail::put_vec(s, tr.noise_ancestor);
    return s;
}

inline EnsembleTrace trace_from_bytes(const std::string& s, std::uint64_t* cfg_hash_out = nullptr) {
    if (s.size() < 4 || s.compare(0, 4, "MFGT") != 0) throw std::runtime_error("not a trace file");
    std::size_t off = 4;
    auto version = detail::get_raw<std::uint32_t>(s, off);
    if (version != 1) throw std::runtime_error("unsupported trace version");
    EnsembleTrace tr;
    tr.seed = detail::get_raw<std::uint64_t>(s, off);
    tr.replication = detail::get_raw<std::uint64_t>(s, off);
    std::uint64_t cfg_hash = detail::get_raw<std::uint64_t>(s, off);
    if (cfg_hash_out) *cfg_hash_out = cfg_hash;
    tr.particles = detail::get_raw<std::uint64_t>(s, off);
    tr.horizon = detail::get_raw<std::uint64_t>(s, off);
    tr.variant = detail::get_raw<std::uint8_t>(s, off) == 0 ? Variant::OwnState : Variant::Ancestor;
    const std::size_t cells = tr.particles * (tr.horizon + 1);
    detail::get_vec(s, off, tr.states, cells);
    detail::get_vec(s, off, tr.actions, cells);
    detail::get_vec(s, off, tr.noise_state, cells);
    detail::get_vec(s, off, tr.noise_action, cells);
    detail::get_vec(s, off, tr.noise_ancestor, tr.variant == Variant::Ancestor ? cells : 0);
    return tr;
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace mfgld
