// Model config parsing and validation. Every violation is reported with the
// offending tensor path, not just the first one found.
#pragma once

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfgld/core.hpp"
#include "mfgld/model.hpp"

namespace mfgld {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

struct Validator {
    std::vector<std::string> violations;

    void fail(const std::string& msg) { violations.push_back(msg); }

    bool expect_array(const nlohmann::json& j, std::size_t len, const std::string& path) {
        if (!j.is_array()) {
            fail("expected array at " + path);
            return false;
        }
        if (j.size() != len) {
            fail("expected length " + std::to_string(len) + " at " + path + ", got " +
                 std::to_string(j.size()));
            return false;
        }
        return true;
    }

    bool expect_number(const nlohmann::json& j, const std::string& path) {
        if (!j.is_number()) {
            fail("expected number at " + path);
            return false;
        }
        return true;
    }

    // nested numeric tensor with exact shape dims[0] x dims[1] x ...
    void check_tensor(const nlohmann::json& j, std::span<const std::size_t> dims, const std::string& path) {
        if (dims.empty()) {
            expect_number(j, path);
            return;
        }
        if (!expect_array(j, dims[0], path)) return;
        for (std::size_t i = 0; i < dims[0]; ++i)
            check_tensor(j[i], dims.subspan(1), path + "[" + std::to_string(i) + "]");
    }

    // probability row: nonnegative entries summing to 1 within kMassTol
    void check_dist_row(const nlohmann::json& j, std::size_t len, const std::string& path) {
        if (!expect_array(j, len, path)) return;
        double sum = 0.0;
        bool ok = true;
        for (std::size_t i = 0; i < len; ++i) {
            const std::string p = path + "[" + std::to_string(i) + "]";
            if (!expect_number(j[i], p)) {
                ok = false;
                continue;
            }
            double v = j[i].get<double>();
            if (v < -kNegEntryTol) {
                fail("negative probability " + fmt_num(v) + " at " + p);
                ok = false;
            }
            sum += v;
        }
        if (ok && std::abs(sum - 1.0) > kMassTol)
            fail("row sum " + fmt_num(sum) + " != 1 at " + path);
    }
};

inline T1 to_t1(const nlohmann::json& j) { return j.get<T1>(); }
inline T3 to_t3(const nlohmann::json& j) { return j.get<T3>(); }
inline T4 to_t4(const nlohmann::json& j) { return j.get<T4>(); }
inline T5 to_t5(const nlohmann::json& j) { return j.get<T5>(); }

}  // namespace detail

inline ModelSpec validate_model(const nlohmann::json& cfg) {
    detail::Validator v;
    if (!cfg.is_object()) throw ValidationError({"config root must be an object"});

    static const std::vector<std::string> known = {
        "state_space", "action_space", "horizon",         "mu0",
        "base_logits", "mf_weights",   "policy",          "costs",
        "cost_mf_weights"};
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            v.fail("unknown field \"" + it.key() + "\"");
    }
    bool missing_required = false;
    for (const auto& req : {"state_space", "action_space", "horizon", "mu0", "base_logits", "policy"}) {
        if (!cfg.contains(req)) {
            v.fail(std::string("missing field \"") + req + "\"");
            missing_required = true;
        }
    }
    if (missing_required) throw ValidationError(std::move(v.violations));

    auto read_space = [&](const char* key) -> Space {
        const auto& j = cfg[key];
        if (!j.is_array() || j.empty()) {
            v.fail(std::string(key) + ": expected non-empty array of labels");
            return Space::indexed(1);
        }
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_string()) {
                v.fail(std::string(key) + "[" + std::to_string(i) + "]: expected string label");
                labels.push_back("?" + std::to_string(i));
            } else {
                labels.push_back(j[i].get<std::string>());
            }
        }
        try {
            return Space(std::move(labels));
        } catch (const ValidationError& e) {
            for (const auto& msg : e.violations()) v.fail(std::string(key) + ": " + msg);
            return Space::indexed(j.size());
        }
    };

    Space sx = read_space("state_space");
    Space sa = read_space("action_space");
    const std::size_t nx = sx.size(), na = sa.size();

    std::size_t T = 0;
    if (!cfg["horizon"].is_number_unsigned())
        v.fail("horizon: expected nonnegative integer");
    else
        T = cfg["horizon"].get<std::size_t>();

    v.check_dist_row(cfg["mu0"], nx, "mu0");

    {
        const std::size_t dims[] = {T, nx, na, nx};
        v.check_tensor(cfg["base_logits"], dims, "base_logits");
    }
    const bool has_mf = cfg.contains("mf_weights");
    if (has_mf) {
        const std::size_t dims[] = {T, nx, na, nx, nx};
        v.check_tensor(cfg["mf_weights"], dims, "mf_weights");
    }

    bool solve_marker = false;
    if (cfg["policy"].is_string()) {
        if (cfg["policy"].get<std::string>() == "solve")
            solve_marker = true;
        else
            v.fail("policy: string value must be \"solve\"");
    } else if (v.expect_array(cfg["policy"], T + 1, "policy")) {
        for (std::size_t t = 0; t <= T; ++t) {
            const std::string pt = "policy[" + std::to_string(t) + "]";
            if (!v.expect_array(cfg["policy"][t], nx, pt)) continue;
            for (std::size_t x = 0; x < nx; ++x)
                v.check_dist_row(cfg["policy"][t][x], na, pt + "[" + std::to_string(x) + "]");
        }
    }

    const bool has_costs = cfg.contains("costs");
    if (has_costs) {
        const std::size_t dims[] = {T + 1, nx, na};
        v.check_tensor(cfg["costs"], dims, "costs");
    }
    if (cfg.contains("cost_mf_weights")) {
        if (!has_costs) v.fail("cost_mf_weights given without costs");
        const std::size_t dims[] = {T + 1, nx, na, nx};
        v.check_tensor(cfg["cost_mf_weights"], dims, "cost_mf_weights");
    }
    if (solve_marker && !has_costs) v.fail("policy \"solve\" requires costs");

    if (!v.violations.empty()) throw ValidationError(std::move(v.violations));

    ModelSpec m;
    m.state_space = std::move(sx);
    m.action_space = std::move(sa);
    m.horizon = T;
    m.mu0 = Dist(cfg["mu0"].get<T1>(), "mu0");
    m.base_logits = detail::to_t4(cfg["base_logits"]);
    if (has_mf) m.mf_weights = detail::to_t5(cfg["mf_weights"]);
    if (solve_marker) {
        m.policy_pending_solve = true;
    } else {
        for (std::size_t t = 0; t <= T; ++t)
            m.policy.push_back(Kernel::from_rows(cfg["policy"][t].get<T2>(), "policy[" + std::to_string(t) + "]"));
    }
    if (has_costs) m.costs = detail::to_t3(cfg["costs"]);
    if (cfg.contains("cost_mf_weights")) m.cost_mf_weights = detail::to_t4(cfg["cost_mf_weights"]);
    return m;
}

inline nlohmann::json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("parse error in ") + path + ": " + e.what());
    }
}

inline ModelSpec load_model(const std::string& path) { return validate_model(parse_json_file(path)); }

}  // namespace mfgld
