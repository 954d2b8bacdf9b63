// mfgld command-line harness: validate model configs, solve equilibria,
// evaluate rate functions, and run seeded particle experiments.
//
// Exit codes: 0 success (an "inf" rate is a valid answer), 2 parse error,
// 3 validation error, 4 solver non-convergence.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfgld/io.hpp"
#include "mfgld/mfe.hpp"
#include "mfgld/mfgld.hpp"
#include "mfgld/model_io.hpp"

namespace {

using nlohmann::json;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string join_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += " ";
        s += argv[i];
    }
    return s;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find(',', pos);
        if (next == std::string::npos) next = s.size();
        out.push_back(std::stoull(s.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (auto v : parse_size_list(s)) out.push_back(v);
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find(',', pos);
        if (next == std::string::npos) next = s.size();
        out.push_back(std::stod(s.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

struct LoadedModel {
    mfgld::ModelSpec model;
    std::uint64_t cfg_hash = 0;
};

LoadedModel load_model_checked(const std::string& path, const std::string& policy_path) {
    json cfg = mfgld::parse_json_file(path);
    LoadedModel lm;
    lm.model = mfgld::validate_model(cfg);
    lm.cfg_hash = mfgld::config_hash(cfg);
    if (!policy_path.empty()) {
        json pj = mfgld::parse_json_file(policy_path);
        if (pj.is_object() && pj.contains("policy")) pj = pj["policy"];
        lm.model.policy = mfgld::policy_from_json(pj);
        lm.model.policy_pending_solve = false;
        if (lm.model.policy.size() != lm.model.horizon + 1)
            throw mfgld::ValidationError({"policy override: expected " + std::to_string(lm.model.horizon + 1) +
                                          " time slices, got " + std::to_string(lm.model.policy.size())});
    }
    return lm;
}

void write_with_manifest(const std::string& out_path, const std::string& content, const LoadedModel& lm,
                         std::uint64_t seed, const std::string& cmdline, const Timer& timer) {
    std::string body = content;
    if (out_path.size() > 4 && out_path.compare(out_path.size() - 4, 4, ".csv") == 0)
        body = "# config " + mfgld::hash_hex(lm.cfg_hash) + "\n" + body;
    mfgld::write_text_file(out_path, body);
    mfgld::RunManifest man;
    man.command_line = cmdline;
    man.config_hash_hex = mfgld::hash_hex(lm.cfg_hash);
    man.master_seed = seed;
    man.wall_time_s = timer.seconds();
    man.outputs = {out_path};
    mfgld::write_text_file(out_path + ".manifest.json", man.to_json().dump(2) + "\n");
}

mfgld::EventSpec make_event(const mfgld::ModelSpec& m, std::size_t t, const std::string& target_csv, double eps) {
    auto w = parse_double_list(target_csv);
    if (w.size() != m.pair_count())
        throw mfgld::ValidationError({"event target needs " + std::to_string(m.pair_count()) + " weights"});
    return mfgld::EventSpec(t, mfgld::Dist(std::move(w), "event target"), eps);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "mfgld: rate functions and seeded particle experiments for finite-space "
        "mean-field interactions"};
    app.require_subcommand(1);
    app.footer("Environment: MFGLD_THREADS sets the worker count for replicated runs.");

    const std::string cmdline = join_args(argc, argv);

    std::string model_path, policy_path, gamma_path, out_path;
    std::uint64_t seed = 1;
    std::string variant_str = "own";
    std::string kind = "j";
    double tol = 1e-10;
    std::size_t max_iter = 100000;

    // --- validate ---
    auto* c_validate = app.add_subcommand("validate", "validate a model config and report every violation");
    c_validate->add_option("--model", model_path, "model config JSON")->required();
    c_validate->callback([&] {
        mfgld::load_model(model_path);
        std::puts("ok");
    });

    // --- rate ---
    auto* c_rate = app.add_subcommand("rate", "evaluate a rate function on a marginal flow");
    c_rate->add_option("--model", model_path)->required();
    c_rate->add_option("--gamma", gamma_path, "flow JSON: list of length-|E| weight arrays (or {initial,kernels} for --kind path)")
        ->required();
    c_rate->add_option("--kind", kind, "one of v|j|exact|prop1|prop2|path");
    c_rate->add_option("--out", out_path, "output report JSON");
    c_rate->add_option("--tol", tol, "bridge tolerance");
    c_rate->add_option("--max-iter", max_iter, "bridge / oracle iteration budget");
    c_rate->add_option("--policy", policy_path, "policy override JSON (as written by mfe)");
    std::size_t prop2_t = static_cast<std::size_t>(-1);
    std::size_t g_count = 50, grid_n = 1000;
    std::uint64_t g_seed = 7;
    c_rate->add_option("--t", prop2_t, "time index for --kind prop2");
    c_rate->add_option("--g-count", g_count, "test-vector count for --kind prop2");
    c_rate->add_option("--grid", grid_n, "simplex grid resolution for --kind prop2");
    c_rate->add_option("--g-seed", g_seed, "test-vector seed for --kind prop2");
    c_rate->callback([&] {
        Timer timer;
        LoadedModel lm = load_model_checked(model_path, policy_path);
        const auto& m = lm.model;
        json gj = mfgld::parse_json_file(gamma_path);
        json report;
        bool converged = true;
        if (kind == "path") {
            mfgld::MarkovPathMeasure phi = mfgld::path_measure_from_json(gj);
            double v = mfgld::path_space_rate(m, phi);
            report = {{"kind", "path"}, {"value", mfgld::extended_to_json(v)}};
            std::printf("path rate: %s\n", mfgld::format_double(v).c_str());
        } else {
            mfgld::Flow gamma = mfgld::flow_from_json(gj);
            if (kind == "v") {
                mfgld::RateReport r = mfgld::stepwise_rate(m, gamma);
                report = mfgld::to_json(r);
                report["kind"] = "v";
                std::printf("stepwise rate: %s\n", mfgld::format_double(r.value).c_str());
            } else if (kind == "j") {
                mfgld::RateReport r = mfgld::projection_rate(m, gamma, tol, max_iter);
                converged = r.converged;
                report = mfgld::to_json(r);
                report["kind"] = "j";
                std::printf("projection rate: %s\n", mfgld::format_double(r.value).c_str());
            } else if (kind == "exact") {
                mfgld::MarkovPathMeasure ref;
                ref.initial = mfgld::initial_pair_dist(m);
                for (std::size_t t = 0; t + 1 < gamma.size(); ++t)
                    ref.kernels.push_back(mfgld::pair_kernel(m, gamma[t], t));
                mfgld::IProjectResult r = mfgld::i_project_exact(ref, gamma, max_iter, std::min(tol, 1e-9));
                converged = r.converged || !r.feasible;
                report = {{"kind", "exact"},
                          {"value", mfgld::extended_to_json(r.value)},
                          {"iterations", r.iterations},
                          {"gap", mfgld::extended_to_json(r.gap)},
                          {"feasible", r.feasible},
                          {"converged", r.converged}};
                std::printf("exact projection value: %s\n", mfgld::format_double(r.value).c_str());
            } else if (kind == "prop1") {
                mfgld::RateReport j = mfgld::projection_rate(m, gamma, tol, max_iter);
                mfgld::RateReport v = mfgld::stepwise_rate(m, gamma);
                mfgld::RateReport res = mfgld::reversal_residual(m, gamma, tol, max_iter);
                converged = j.converged && res.converged;
                report = {{"kind", "prop1"},
                          {"j", mfgld::to_json(j)},
                          {"v", mfgld::to_json(v)},
                          {"residual", mfgld::to_json(res)}};
                double gap = (j.value == mfgld::kInf || v.value == mfgld::kInf || res.value == mfgld::kInf)
                                 ? 0.0
                                 : j.value - v.value - res.value;
                report["identity_gap"] = gap;
                std::printf("j=%s v=%s residual=%s identity_gap=%s\n", mfgld::format_double(j.value).c_str(),
                            mfgld::format_double(v.value).c_str(), mfgld::format_double(res.value).c_str(),
                            mfgld::format_double(gap).c_str());
            } else if (kind == "prop2") {
                std::size_t t = prop2_t == static_cast<std::size_t>(-1) ? gamma.size() - 1 : prop2_t;
                if (t >= gamma.size()) throw mfgld::ValidationError({"--t out of range for the given flow"});
                mfgld::NoiseDriver rng(g_seed);
                std::vector<std::vector<double>> g_family(g_count, std::vector<double>(m.pair_count()));
                for (std::size_t i = 0; i < g_count; ++i)
                    for (std::size_t e = 0; e < m.pair_count(); ++e)
                        g_family[i][e] = 4.0 * (rng.uniform(i, e, 0, mfgld::NoiseRole::State) - 0.5);
                mfgld::DvBound b = mfgld::dv_lower_bound(m, gamma[t], t, g_family, grid_n);
                report = {{"kind", "prop2"},
                          {"bound", mfgld::extended_to_json(b.value)},
                          {"grid_error_estimate", b.grid_error_estimate},
                          {"t", t},
                          {"g_count", g_count},
                          {"grid", grid_n}};
                if (m.pair_count() <= 2 && t <= 3) {
                    double mj = mfgld::marginal_projection_rate(m, gamma[t], t);
                    report["marginal_j"] = mfgld::extended_to_json(mj);
                    std::printf("lower bound: %s (marginal projection rate %s)\n",
                                mfgld::format_double(b.value).c_str(), mfgld::format_double(mj).c_str());
                } else {
                    std::printf("lower bound: %s\n", mfgld::format_double(b.value).c_str());
                }
            } else {
                throw mfgld::ValidationError({"unknown --kind " + kind});
            }
        }
        if (!out_path.empty()) {
            report["config_hash"] = mfgld::hash_hex(lm.cfg_hash);
            write_with_manifest(out_path, report.dump(2) + "\n", lm, 0, cmdline, timer);
        }
        if (!converged) std::exit(4);
    });

    // --- mfe ---
    auto* c_mfe = app.add_subcommand("mfe", "solve the finite-horizon equilibrium policy");
    double damping = 0.5;
    std::size_t mfe_max_iter = 500;
    c_mfe->add_option("--model", model_path)->required();
    c_mfe->add_option("--damping", damping, "flow damping in (0,1]");
    c_mfe->add_option("--tol", tol, "fixed-point tolerance (max-over-t L1)");
    c_mfe->add_option("--max-iter", mfe_max_iter);
    c_mfe->add_option("--out", out_path, "solved policy + flow JSON");
    c_mfe->callback([&] {
        Timer timer;
        LoadedModel lm = load_model_checked(model_path, "");
        mfgld::MfeResult res = mfgld::solve_mfe(lm.model, damping, tol, mfe_max_iter);
        json out = {{"policy", mfgld::policy_to_json(res.policy)},
                    {"flow", mfgld::flow_to_json(res.flow)},
                    {"iterations", res.iterations},
                    {"residual", res.residual},
                    {"converged", res.converged},
                    {"config_hash", mfgld::hash_hex(lm.cfg_hash)}};
        if (!out_path.empty()) write_with_manifest(out_path, out.dump(2) + "\n", lm, 0, cmdline, timer);
        std::printf("fixed-point residual: %s after %zu iterations%s\n", mfgld::format_double(res.residual).c_str(),
                    res.iterations, res.converged ? "" : " (not converged)");
        if (!res.converged) std::exit(4);
    });

    // --- simulate ---
    auto* c_sim = app.add_subcommand("simulate", "run one seeded ensemble and write the empirical flow");
    std::size_t n_particles = 100;
    std::string trace_out;
    bool do_phi_check = false;
    c_sim->add_option("--model", model_path)->required();
    c_sim->add_option("--N", n_particles, "number of particles")->required();
    c_sim->add_option("--seed", seed);
    c_sim->add_option("--variant", variant_str, "own | ancestor");
    c_sim->add_option("--out", out_path, "empirical flow CSV")->required();
    c_sim->add_option("--trace-out", trace_out, "binary trace output");
    c_sim->add_option("--policy", policy_path);
    c_sim->add_flag("--phi-check", do_phi_check, "verify the pathwise pushforward identity on the trace");
    c_sim->callback([&] {
        Timer timer;
        LoadedModel lm = load_model_checked(model_path, policy_path);
        mfgld::SimOptions opts;
        opts.seed = seed;
        opts.variant = variant_str == "ancestor" ? mfgld::Variant::Ancestor : mfgld::Variant::OwnState;
        opts.record_trace = do_phi_check || !trace_out.empty();
        mfgld::SimResult res = mfgld::simulate(lm.model, n_particles, opts);
        write_with_manifest(out_path, mfgld::csv_empirical_flow(lm.model, res.flow), lm, seed, cmdline, timer);
        if (!trace_out.empty()) mfgld::write_text_file(trace_out, mfgld::trace_to_bytes(*res.trace, lm.cfg_hash));
        if (do_phi_check) {
            mfgld::PhiCheckResult pc = mfgld::phi_check(lm.model, *res.trace);
            std::printf("pushforward check: %s (mismatches %zu)\n", pc.ok ? "exact" : "FAILED", pc.mismatches);
            if (!pc.ok) std::exit(4);
        }
    });

    // --- prob ---
    auto* c_prob = app.add_subcommand("prob", "estimate a deviation-ball probability with a Wilson interval");
    std::uint64_t reps = 1000;
    std::size_t event_t = 0;
    std::string event_target;
    double event_eps = 0.1;
    c_prob->add_option("--model", model_path)->required();
    c_prob->add_option("--N", n_particles)->required();
    c_prob->add_option("--reps", reps);
    c_prob->add_option("--seed", seed);
    c_prob->add_option("--variant", variant_str);
    c_prob->add_option("--event-t", event_t)->required();
    c_prob->add_option("--event-target", event_target, "comma-separated weights over E")->required();
    c_prob->add_option("--event-eps", event_eps, "L1 radius");
    c_prob->add_option("--out", out_path)->required();
    c_prob->add_option("--policy", policy_path);
    c_prob->callback([&] {
        Timer timer;
        LoadedModel lm = load_model_checked(model_path, policy_path);
        mfgld::EventSpec ev = make_event(lm.model, event_t, event_target, event_eps);
        auto variant = variant_str == "ancestor" ? mfgld::Variant::Ancestor : mfgld::Variant::OwnState;
        mfgld::ProbEstimate est = mfgld::estimate_probability(lm.model, ev, n_particles, reps, seed, variant);
        write_with_manifest(out_path, mfgld::csv_prob(est), lm, seed, cmdline, timer);
        std::printf("p_hat = %s  [%s, %s]\n", mfgld::format_double(est.p_hat).c_str(),
                    mfgld::format_double(est.ci.lo).c_str(), mfgld::format_double(est.ci.hi).c_str());
    });

    // --- ldp ---
    auto* c_ldp = app.add_subcommand("ldp", "decay-slope ladder over N with linear-in-1/N extrapolation");
    std::string n_list_str = "50,100,200,400,800", reps_list_str = "100000";
    bool rate_ref = false;
    c_ldp->add_option("--model", model_path)->required();
    c_ldp->add_option("--N-list", n_list_str, "comma-separated increasing N values");
    c_ldp->add_option("--reps", reps_list_str, "replications: one value or one per N");
    c_ldp->add_option("--seed", seed);
    c_ldp->add_option("--variant", variant_str);
    c_ldp->add_option("--event-t", event_t)->required();
    c_ldp->add_option("--event-target", event_target)->required();
    c_ldp->add_option("--event-eps", event_eps);
    c_ldp->add_option("--out", out_path)->required();
    c_ldp->add_option("--policy", policy_path);
    c_ldp->add_flag("--rate-ref", rate_ref, "also search the rate-function infimum over the event ball");
    c_ldp->callback([&] {
        Timer timer;
        LoadedModel lm = load_model_checked(model_path, policy_path);
        mfgld::EventSpec ev = make_event(lm.model, event_t, event_target, event_eps);
        auto variant = variant_str == "ancestor" ? mfgld::Variant::Ancestor : mfgld::Variant::OwnState;
        mfgld::SlopeTable table =
            mfgld::ldp_slope(lm.model, ev, parse_size_list(n_list_str), parse_u64_list(reps_list_str), seed, variant);
        write_with_manifest(out_path, mfgld::csv_slope_table(table), lm, seed, cmdline, timer);
        json extra = {{"extrapolated_slope", table.extrapolated},
                      {"extrapolated_se", table.extrapolated_se},
                      {"usable_rows", table.usable_rows}};
        std::printf("extrapolated slope: %s (se %s, usable rows %zu)\n",
                    mfgld::format_double(table.extrapolated).c_str(),
                    mfgld::format_double(table.extrapolated_se).c_str(), table.usable_rows);
        if (rate_ref) {
            mfgld::BallRateResult br = mfgld::ball_rate_infimum(lm.model, ev.target, ev.epsilon, ev.t);
            extra["ball_rate_infimum"] = mfgld::extended_to_json(br.value);
            std::printf("ball rate infimum: %s\n", mfgld::format_double(br.value).c_str());
        }
        mfgld::write_text_file(out_path + ".extra.json", extra.dump(2) + "\n");
    });

    // --- lln ---
    auto* c_lln = app.add_subcommand("lln", "mean L1 error to the deterministic flow per N");
    std::size_t lln_t = 1;
    c_lln->add_option("--model", model_path)->required();
    c_lln->add_option("--t", lln_t)->required();
    c_lln->add_option("--N-list", n_list_str)->required();
    c_lln->add_option("--reps", reps);
    c_lln->add_option("--seed", seed);
    c_lln->add_option("--out", out_path)->required();
    c_lln->add_option("--policy", policy_path);
    c_lln->callback([&] {
        Timer timer;
        LoadedModel lm = load_model_checked(model_path, policy_path);
        auto rows = mfgld::lln_curve(lm.model, lln_t, parse_size_list(n_list_str), reps, seed);
        write_with_manifest(out_path, mfgld::csv_lln(rows), lm, seed, cmdline, timer);
        for (const auto& r : rows)
            std::printf("N=%zu mean_l1=%s\n", r.n_particles, mfgld::format_double(r.mean_l1).c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const mfgld::ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return 2;
    } catch (const mfgld::ValidationError& e) {
        for (const auto& msg : e.violations()) std::fprintf(stderr, "invalid: %s\n", msg.c_str());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
