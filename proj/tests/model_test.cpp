#include <gtest/gtest.h>

#include "mfgld/model_io.hpp"
#include "test_support.hpp"

using namespace mfgld;

namespace {
std::string cfg_path(const char* name) { return std::string(MFGLD_SOURCE_DIR) + "/configs/" + name; }
}  // namespace

TEST(ValidateModel, MinimalSinglePointConfig) {
    ModelSpec m = load_model(cfg_path("minimal.json"));
    EXPECT_EQ(m.num_states(), 1u);
    EXPECT_EQ(m.num_actions(), 1u);
    EXPECT_EQ(m.horizon, 1u);
    Kernel k = transition_kernel(m, m.mu0, 0);
    EXPECT_EQ(k.at(0, 0), 1.0);  // degenerate kernel is the point mass
}

TEST(ValidateModel, PolicyRowSumViolationCarriesTensorPath) {
    try {
        load_model(cfg_path("bad_policy.json"));
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        ASSERT_EQ(e.violations().size(), 1u);
        EXPECT_NE(e.violations()[0].find("row sum 1.1"), std::string::npos) << e.violations()[0];
        EXPECT_NE(e.violations()[0].find("policy[0][0]"), std::string::npos) << e.violations()[0];
    }
}

TEST(ValidateModel, ReportsEveryViolation) {
    nlohmann::json cfg = parse_json_file(cfg_path("bad_policy.json"));
    cfg["mu0"] = {0.5, 0.7};
    cfg["extra_knob"] = 1;
    try {
        validate_model(cfg);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_GE(e.violations().size(), 2u);
    }
}

TEST(ValidateModel, ShapeMismatchNamesThePath) {
    nlohmann::json cfg = parse_json_file(cfg_path("two_by_two.json"));
    cfg["base_logits"][1][0][1] = {0.1};  // should have |X| = 2 entries
    try {
        validate_model(cfg);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        bool found = false;
        for (const auto& v : e.violations()) found = found || v.find("base_logits[1][0][1]") != std::string::npos;
        EXPECT_TRUE(found);
    }
}

TEST(ValidateModel, TwoByTwoKernelMatchesDirectSoftmax) {
    nlohmann::json cfg = parse_json_file(cfg_path("two_by_two.json"));
    ModelSpec m = validate_model(cfg);
    Dist mu = Dist::uniform(2);
    for (std::size_t t = 0; t < m.horizon; ++t) {
        Kernel k = transition_kernel(m, mu, t);
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t a = 0; a < 2; ++a) {
                std::vector<double> logits(2);
                for (std::size_t xp = 0; xp < 2; ++xp) {
                    logits[xp] = cfg["base_logits"][t][x][a][xp].get<double>();
                    for (std::size_t kk = 0; kk < 2; ++kk)
                        logits[xp] += cfg["mf_weights"][t][x][a][xp][kk].get<double>() * mu[kk];
                }
                auto expect = testsup::softmax_oracle(logits);
                for (std::size_t xp = 0; xp < 2; ++xp)
                    EXPECT_NEAR(k.at(m.pair_index(x, a), xp), expect[xp], 1e-14);
            }
    }
}

TEST(TransitionKernel, ZeroLogitsAreUniform) {
    ModelSpec m = testsup::collapsed_model(2);
    Kernel k = transition_kernel(m, Dist(std::vector<double>{0.9, 0.1}), 0);
    for (std::size_t e = 0; e < 2; ++e)
        for (std::size_t xp = 0; xp < 2; ++xp) EXPECT_NEAR(k.at(e, xp), 0.5, 1e-15);
}

TEST(TransitionKernel, MuIndependentWhenWeightsAbsent) {
    ModelSpec m = testsup::collapsed_model(2, 0.4, -0.3, 0.0);
    Kernel k1 = transition_kernel(m, Dist(std::vector<double>{0.9, 0.1}), 0);
    Kernel k2 = transition_kernel(m, Dist(std::vector<double>{0.2, 0.8}), 0);
    EXPECT_EQ(k1.flat(), k2.flat());
}

TEST(TransitionKernel, ScalarSoftmaxOracle) {
    // base row (0, -1), +2 * mu(s1) on the second column, mu = (0.25, 0.75):
    // logits (0, 0.5)
    ModelSpec m;
    m.state_space = Space({"s0", "s1"});
    m.action_space = Space({"a0"});
    m.horizon = 1;
    m.mu0 = Dist::uniform(2);
    m.base_logits = {{{{0.0, -1.0}}, {{0.0, -1.0}}}};
    m.mf_weights = {{{{{0.0, 0.0}, {0.0, 2.0}}}, {{{0.0, 0.0}, {0.0, 2.0}}}}};
    m.policy = {Kernel::from_rows({{1.0}, {1.0}}), Kernel::from_rows({{1.0}, {1.0}})};
    Kernel k = transition_kernel(m, Dist(std::vector<double>{0.25, 0.75}), 0);
    auto expect = testsup::softmax_oracle({0.0, 0.5});
    EXPECT_NEAR(k.at(0, 0), expect[0], 1e-14);
    EXPECT_NEAR(k.at(0, 1), expect[1], 1e-14);
    EXPECT_NEAR(k.at(0, 0), 0.3775, 2e-4);
    EXPECT_NEAR(k.at(0, 1), 0.6225, 2e-4);
}

// the softmax-affine family is Lipschitz in mu with constant max|mf_weights|
TEST(TransitionKernel, ContinuityInMu) {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 40; ++rep) {
        testsup::RandomModelParams p;
        p.nx = 2 + rep % 2;
        p.na = 1 + rep % 3;
        ModelSpec m = testsup::random_model(rng, p);
        double cbound = 0.0;
        for (const auto& a : m.mf_weights)
            for (const auto& b : a)
                for (const auto& c : b)
                    for (const auto& d : c)
                        for (double v : d) cbound = std::max(cbound, std::abs(v));
        Dist mu1 = testsup::random_dist(rng, p.nx), mu2 = testsup::random_dist(rng, p.nx);
        Kernel k1 = transition_kernel(m, mu1, 0), k2 = transition_kernel(m, mu2, 0);
        double diff = 0.0;
        for (std::size_t i = 0; i < k1.flat().size(); ++i)
            diff = std::max(diff, std::abs(k1.flat()[i] - k2.flat()[i]));
        EXPECT_LE(diff, cbound * l1_distance(mu1, mu2) + 1e-12);
    }
}

TEST(PairKernel, SingletonActionReducesToStateKernel) {
    ModelSpec m = testsup::collapsed_model(1, 0.7, -0.2, 0.5);
    Dist nu(std::vector<double>{0.3, 0.7});
    Kernel kappa = pair_kernel(m, nu, 0);
    Kernel state_k = transition_kernel(m, state_marginal(m, nu), 0);
    EXPECT_EQ(kappa.flat(), state_k.flat());
}

TEST(PairKernel, DeterministicComposition) {
    // identity state kernel (huge diagonal logits) and a deterministic policy
    ModelSpec m;
    m.state_space = Space({"x0", "x1"});
    m.action_space = Space({"u", "v"});
    m.horizon = 1;
    m.mu0 = Dist::uniform(2);
    T2 diag_row0 = {{60.0, 0.0}, {60.0, 0.0}};
    T2 diag_row1 = {{0.0, 60.0}, {0.0, 60.0}};
    m.base_logits = {{diag_row0, diag_row1}};
    m.policy = {Kernel::from_rows({{1.0, 0.0}, {0.0, 1.0}}), Kernel::from_rows({{0.0, 1.0}, {1.0, 0.0}})};
    Kernel kappa = pair_kernel(m, Dist::uniform(4), 0);
    for (std::size_t e = 0; e < 4; ++e) {
        double mass = 0.0;
        for (std::size_t ep = 0; ep < 4; ++ep) {
            double v = kappa.at(e, ep);
            EXPECT_TRUE(v < 1e-12 || v > 1.0 - 1e-12);
            mass += v;
        }
        EXPECT_NEAR(mass, 1.0, 1e-12);
    }
    // from (x0, *) the state stays x0 and the next action is v
    EXPECT_NEAR(kappa.at(m.pair_index(0, 0), m.pair_index(0, 1)), 1.0, 1e-12);
}

TEST(PairKernel, UniformKernelHandProduct) {
    ModelSpec m;
    m.state_space = Space({"x0", "x1"});
    m.action_space = Space({"u", "v"});
    m.horizon = 1;
    m.mu0 = Dist::uniform(2);
    T2 zero_row = {{0.0, 0.0}, {0.0, 0.0}};
    m.base_logits = {{zero_row, zero_row}};
    m.policy = {Kernel::from_rows({{0.5, 0.5}, {0.5, 0.5}}),
                Kernel::from_rows({{0.7, 0.3}, {0.2, 0.8}})};
    Kernel kappa = pair_kernel(m, Dist::uniform(4), 0);
    for (std::size_t e = 0; e < 4; ++e) {
        EXPECT_NEAR(kappa.at(e, 0), 0.35, 1e-14);
        EXPECT_NEAR(kappa.at(e, 1), 0.15, 1e-14);
        EXPECT_NEAR(kappa.at(e, 2), 0.10, 1e-14);
        EXPECT_NEAR(kappa.at(e, 3), 0.40, 1e-14);
    }
}

TEST(PairKernel, RequiresResolvedPolicy) {
    ModelSpec m = testsup::collapsed_model(1);
    m.policy.clear();
    m.policy_pending_solve = true;
    EXPECT_THROW(pair_kernel(m, Dist::uniform(2), 0), ValidationError);
}

TEST(FlowStep, IdentityAndConstantKernels) {
    // mu-independent identity state kernel keeps any nu fixed
    ModelSpec m;
    m.state_space = Space({"x0", "x1"});
    m.action_space = Space({"a"});
    m.horizon = 1;
    m.mu0 = Dist::uniform(2);
    m.base_logits = {{{{60.0, 0.0}}, {{0.0, 60.0}}}};
    m.policy = {Kernel::from_rows({{1.0}, {1.0}}), Kernel::from_rows({{1.0}, {1.0}})};
    Dist nu(std::vector<double>{0.3, 0.7});
    Dist out = flow_step(m, nu, 0);
    EXPECT_NEAR(out[0], 0.3, 1e-12);
    EXPECT_NEAR(out[1], 0.7, 1e-12);

    ModelSpec u = testsup::uniform_collapsed_model(1);
    Dist out2 = flow_step(u, nu, 0);
    EXPECT_NEAR(out2[0], 0.5, 1e-15);
    EXPECT_NEAR(out2[1], 0.5, 1e-15);
}

TEST(FlowStep, MatrixVectorOracle) {
    ModelSpec m;
    m.state_space = Space({"x0", "x1"});
    m.action_space = Space({"u", "v"});
    m.horizon = 1;
    m.mu0 = Dist::uniform(2);
    T2 zero_row = {{0.0, 0.0}, {0.0, 0.0}};
    m.base_logits = {{zero_row, zero_row}};
    m.policy = {Kernel::from_rows({{0.5, 0.5}, {0.5, 0.5}}),
                Kernel::from_rows({{0.7, 0.3}, {0.2, 0.8}})};
    Dist nu(std::vector<double>{0.4, 0.1, 0.3, 0.2});
    Dist out = flow_step(m, nu, 0);
    EXPECT_NEAR(out[0], 0.35, 1e-14);
    EXPECT_NEAR(out[1], 0.15, 1e-14);
    EXPECT_NEAR(out[2], 0.10, 1e-14);
    EXPECT_NEAR(out[3], 0.40, 1e-14);
}

TEST(FlowStep, PreservesMassOnRandomInstances) {
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 50; ++rep) {
        testsup::RandomModelParams p;
        p.nx = 1 + rep % 3;
        p.na = 1 + (rep / 3) % 3;
        ModelSpec m = testsup::random_model(rng, p);
        Dist nu = testsup::random_dist(rng, m.pair_count());
        Dist out = flow_step(m, nu, 0);
        double s = 0;
        for (double v : out.weights()) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(MeanFieldFlow, InvariantUnderIdentityKernel) {
    ModelSpec m;
    m.state_space = Space({"x0", "x1"});
    m.action_space = Space({"a"});
    m.horizon = 3;
    m.mu0 = Dist(std::vector<double>{0.3, 0.7});
    for (std::size_t t = 0; t < 3; ++t) m.base_logits.push_back({{{60.0, 0.0}}, {{0.0, 60.0}}});
    for (std::size_t t = 0; t <= 3; ++t) m.policy.push_back(Kernel::from_rows({{1.0}, {1.0}}));
    Flow b = mean_field_flow(m, 3);
    for (std::size_t t = 0; t <= 3; ++t) {
        Dist mx = state_marginal(m, b[t]);
        EXPECT_NEAR(mx[0], 0.3, 1e-10);
        EXPECT_NEAR(mx[1], 0.7, 1e-10);
    }
}

TEST(MeanFieldFlow, UniformEverything) {
    ModelSpec m = load_model(cfg_path("two_by_two.json"));
    // strip logits / weights and make the policy uniform: flow stays uniform
    for (auto& bt : m.base_logits)
        for (auto& bx : bt)
            for (auto& ba : bx)
                for (auto& v : ba) v = 0.0;
    m.mf_weights.clear();
    for (auto& pk : m.policy) pk = Kernel::from_rows({{0.5, 0.5}, {0.5, 0.5}});
    m.mu0 = Dist::uniform(2);
    Flow b = mean_field_flow(m, m.horizon);
    for (const auto& bt : b)
        for (std::size_t e = 0; e < 4; ++e) EXPECT_NEAR(bt[e], 0.25, 1e-13);
}

TEST(MeanFieldFlow, MatchesDenseLinearAlgebraOracle) {
    ModelSpec m = load_model(cfg_path("two_by_two.json"));
    Flow b = mean_field_flow(m, 3);
    auto oracle = testsup::dense_flow_oracle(m, 3);
    ASSERT_EQ(b.size(), oracle.size());
    for (std::size_t t = 0; t < b.size(); ++t)
        for (std::size_t e = 0; e < 4; ++e) EXPECT_NEAR(b[t][e], oracle[t][e], 1e-12);
}

TEST(MeanFieldFlow, SelfConsistencyWithFlowStep) {
    ModelSpec m = load_model(cfg_path("two_by_two.json"));
    Flow b = mean_field_flow(m, m.horizon);
    for (std::size_t t = 0; t + 1 < b.size(); ++t) {
        Dist step = flow_step(m, b[t], t);
        EXPECT_LE(l1_distance(step, b[t + 1]), 1e-13);
    }
}

TEST(MeanFieldFlow, SimplifiedVariantAtOwnFlowCoincides) {
    ModelSpec m = load_model(cfg_path("two_by_two.json"));
    Flow own = mean_field_flow(m, m.horizon);
    Flow simplified = mean_field_flow_simplified(m, own, m.horizon);
    EXPECT_LE(max_l1_distance(own, simplified), 1e-13);
}

TEST(MeanFieldFlow, SimplifiedVariantUsesSuppliedMarginals) {
    ModelSpec m = load_model(cfg_path("herding_2state.json"));
    Flow pinned = {Dist(std::vector<double>{0.9, 0.1}), Dist(std::vector<double>{0.9, 0.1}),
                   Dist(std::vector<double>{0.9, 0.1})};
    Flow own = mean_field_flow(m, 2);
    Flow simplified = mean_field_flow_simplified(m, pinned, 2);
    EXPECT_GT(max_l1_distance(own, simplified), 1e-4);  // herding weight reacts to the pinned marginal
    EXPECT_LE(l1_distance(own[0], simplified[0]), 1e-15);
}
