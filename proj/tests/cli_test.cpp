#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mfgld/io.hpp"
#include "mfgld/model_io.hpp"
#include "test_support.hpp"

using namespace mfgld;
namespace fs = std::filesystem;

namespace {

std::string cfg_path(const char* name) { return std::string(MFGLD_SOURCE_DIR) + "/configs/" + name; }

struct TempDir {
    fs::path dir;
    TempDir() {
        dir = fs::temp_directory_path() / ("mfgld_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string operator/(const char* name) const { return (dir / name).string(); }
};

int run_cli(const std::string& args) {
    std::string cmd = std::string(MFGLD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) { return read_file_bytes(path); }

}  // namespace

TEST(Cli, ValidateExitCodes) {
    EXPECT_EQ(run_cli("validate --model " + cfg_path("two_by_two.json")), 0);
    EXPECT_EQ(run_cli("validate --model " + cfg_path("bad_policy.json")), 3);
    TempDir tmp;
    std::ofstream(tmp / "broken.json") << "{ not json";
    EXPECT_EQ(run_cli("validate --model " + (tmp / "broken.json")), 2);
    EXPECT_EQ(run_cli("validate --model " + (tmp / "missing.json")), 2);
}

TEST(Cli, RateStepwiseZeroOnOwnFlow) {
    TempDir tmp;
    ModelSpec m = load_model(cfg_path("two_by_two.json"));
    Flow flow = mean_field_flow(m, m.horizon);
    write_text_file(tmp / "gamma.json", flow_to_json(flow).dump());
    std::string out = tmp / "report.json";
    ASSERT_EQ(run_cli("rate --model " + cfg_path("two_by_two.json") + " --gamma " + (tmp / "gamma.json") +
                      " --kind v --out " + out),
              0);
    auto rep = nlohmann::json::parse(slurp(out));
    EXPECT_LE(extended_from_json(rep["value"]), 1e-10);
    EXPECT_TRUE(fs::exists(out + ".manifest.json"));
}

TEST(Cli, RateProjectionInfinityIsValidAnswer) {
    TempDir tmp;
    // deterministic policy: nu(0) gives zero mass to action 1, so a flow
    // charging it is unreachable
    nlohmann::json cfg = parse_json_file(cfg_path("two_by_two.json"));
    cfg["policy"] = nlohmann::json::array();
    for (int t = 0; t < 4; ++t) cfg["policy"].push_back({{1.0, 0.0}, {1.0, 0.0}});
    write_text_file(tmp / "det.json", cfg.dump());
    Flow gamma = {Dist::uniform(4)};
    write_text_file(tmp / "gamma.json", flow_to_json(gamma).dump());
    std::string out = tmp / "report.json";
    ASSERT_EQ(run_cli("rate --model " + (tmp / "det.json") + " --gamma " + (tmp / "gamma.json") +
                      " --kind j --out " + out),
              0);
    auto rep = nlohmann::json::parse(slurp(out));
    EXPECT_EQ(rep["value"], "inf");
}

TEST(Cli, RateDecompositionReport) {
    TempDir tmp;
    std::mt19937_64 rng(9);
    ModelSpec m = load_model(cfg_path("two_by_two.json"));
    Flow gamma = testsup::random_flow(rng, 4, 3);
    write_text_file(tmp / "gamma.json", flow_to_json(gamma).dump());
    std::string out = tmp / "prop1.json";
    ASSERT_EQ(run_cli("rate --model " + cfg_path("two_by_two.json") + " --gamma " + (tmp / "gamma.json") +
                      " --kind prop1 --out " + out),
              0);
    auto rep = nlohmann::json::parse(slurp(out));
    double j = extended_from_json(rep["j"]["value"]);
    double v = extended_from_json(rep["v"]["value"]);
    double res = extended_from_json(rep["residual"]["value"]);
    EXPECT_LE(std::abs(j - v - res), 1e-6);
}

TEST(Cli, ProbCertainEvent) {
    TempDir tmp;
    std::string out = tmp / "prob.csv";
    ASSERT_EQ(run_cli("prob --model " + cfg_path("herding_2state.json") +
                      " --N 25 --reps 200 --seed 7 --event-t 1 --event-target 0.5,0.5 --event-eps 2.0 --out " + out),
              0);
    std::string csv = slurp(out);
    EXPECT_NE(csv.find(",1\n"), std::string::npos);  // p_hat column is exactly 1
}

TEST(Cli, MfeSolvesAndPolicyFeedsBack) {
    TempDir tmp;
    std::string out = tmp / "policy.json";
    ASSERT_EQ(run_cli("mfe --model " + cfg_path("two_by_two.json") + " --out " + out), 0);
    auto sol = nlohmann::json::parse(slurp(out));
    EXPECT_TRUE(sol["converged"].get<bool>());
    // the solved policy can drive any other subcommand
    std::string sim = tmp / "sim.csv";
    ASSERT_EQ(run_cli("simulate --model " + cfg_path("two_by_two.json") + " --N 50 --seed 3 --policy " + out +
                      " --out " + sim + " --phi-check"),
              0);
}

TEST(Cli, SimulateDeterministicOutputs) {
    TempDir tmp;
    std::string a = tmp / "a.csv", b = tmp / "b.csv";
    std::string base = "simulate --model " + cfg_path("two_by_two.json") + " --N 200 --seed 11 --out ";
    ASSERT_EQ(run_cli(base + a), 0);
    ASSERT_EQ(run_cli(base + b), 0);
    EXPECT_EQ(slurp(a), slurp(b));
}

TEST(Cli, LlnOutputsDeterministicAcrossWorkerCounts) {
    TempDir tmp;
    std::string a = tmp / "a.csv", b = tmp / "b.csv";
    std::string base = "lln --model " + cfg_path("herding_2state.json") + " --t 2 --N-list 20,40 --reps 50 --seed 5 --out ";
    setenv("MFGLD_THREADS", "1", 1);
    ASSERT_EQ(run_cli(base + a), 0);
    setenv("MFGLD_THREADS", "3", 1);
    ASSERT_EQ(run_cli(base + b), 0);
    unsetenv("MFGLD_THREADS");
    EXPECT_EQ(slurp(a), slurp(b));
}

TEST(Cli, LdpLadderWithRateReference) {
    TempDir tmp;
    std::string out = tmp / "ldp.csv";
    // frequent event, small ladder: exercises the table, sidecars, and the
    // rate-function reference search
    ASSERT_EQ(run_cli("ldp --model " + cfg_path("herding_2state.json") +
                      " --N-list 10,20,40 --reps 400 --seed 13 --event-t 1 --event-target 0.6,0.4 "
                      "--event-eps 0.5 --rate-ref --out " + out),
              0);
    auto extra = nlohmann::json::parse(slurp(out + ".extra.json"));
    EXPECT_TRUE(extra.contains("extrapolated_slope"));
    EXPECT_LE(extended_from_json(extra["ball_rate_infimum"]), 1e-6);  // flow sits inside this wide ball
    std::string csv = slurp(out);
    EXPECT_NE(csv.find("N,reps,hits"), std::string::npos);
}

TEST(Cli, MfeNonConvergenceExitsFour) {
    TempDir tmp;
    // congestion stampede with undamped updates cannot settle
    write_text_file(tmp / "stampede.json", R"({
      "state_space": ["x0", "x1"], "action_space": ["go0", "go1"],
      "horizon": 1, "mu0": [0.5, 0.5],
      "base_logits": [[[[800.0, 0.0], [0.0, 800.0]], [[800.0, 0.0], [0.0, 800.0]]]],
      "policy": "solve",
      "costs": [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]],
      "cost_mf_weights": [[[[5.0, 0.0], [5.0, 0.0]], [[0.0, 5.0], [0.0, 5.0]]],
                          [[[5.0, 0.0], [5.0, 0.0]], [[0.0, 5.0], [0.0, 5.0]]]]
    })");
    std::string out = tmp / "policy.json";
    EXPECT_EQ(run_cli("mfe --model " + (tmp / "stampede.json") + " --damping 1.0 --max-iter 20 --out " + out), 4);
    // best iterate still saved
    auto sol = nlohmann::json::parse(slurp(out));
    EXPECT_FALSE(sol["converged"].get<bool>());
}

TEST(Cli, UnresolvedSolvePolicyIsValidationError) {
    TempDir tmp;
    nlohmann::json cfg = parse_json_file(cfg_path("two_by_two.json"));
    cfg["policy"] = "solve";
    write_text_file(tmp / "solve.json", cfg.dump());
    std::string out = tmp / "sim.csv";
    EXPECT_EQ(run_cli("simulate --model " + (tmp / "solve.json") + " --N 10 --seed 1 --out " + out), 3);
}
