#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace mfgld;

namespace {

Coupling random_full_support_coupling(std::mt19937_64& rng, std::size_t n, std::size_t m) {
    std::uniform_real_distribution<double> pos(0.05, 1.0);
    std::vector<double> w(n * m);
    double s = 0;
    for (auto& v : w) s += (v = pos(rng));
    for (auto& v : w) v /= s;
    return Coupling(n, m, std::move(w));
}

}  // namespace

TEST(SinkhornBridge, ReferenceProductWithOwnMarginalsIsOptimal) {
    Dist rho(std::vector<double>{0.3, 0.7}), sigma(std::vector<double>{0.6, 0.4});
    Coupling ref = joint_from_kernel(rho, Kernel::constant_rows(2, sigma));
    BridgeResult r = sinkhorn_bridge(ref, rho, sigma);
    EXPECT_TRUE(r.feasible);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.value, 0.0, 1e-12);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(r.coupling.at(i, j), ref.at(i, j), 1e-10);
}

TEST(SinkhornBridge, ChargedNullColumnIsInfeasible) {
    Coupling ref = Coupling::from_rows({{0.5, 0.0}, {0.5, 0.0}});
    Dist rho(std::vector<double>{0.5, 0.5}), sigma(std::vector<double>{0.9, 0.1});
    BridgeResult r = sinkhorn_bridge(ref, rho, sigma);
    EXPECT_FALSE(r.feasible);
    EXPECT_EQ(r.value, kInf);
}

TEST(SinkhornBridge, UniformReferenceSplitsIntoMarginalDivergences) {
    Coupling ref(2, 2, std::vector<double>{0.25, 0.25, 0.25, 0.25});
    Dist rho(std::vector<double>{0.7, 0.3}), sigma(std::vector<double>{0.6, 0.4});
    BridgeResult r = sinkhorn_bridge(ref, rho, sigma);
    ASSERT_TRUE(r.converged);
    double expect = relative_entropy(rho, Dist::uniform(2)) + relative_entropy(sigma, Dist::uniform(2));
    EXPECT_NEAR(expect, 0.10241839205574068, 1e-12);
    EXPECT_NEAR(r.value, expect, 1e-10);
    // optimum is the product coupling
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(r.coupling.at(i, j), rho[i] * sigma[j], 1e-9);
    // one-parameter grid over all couplings with these marginals agrees
    double oracle = testsup::bridge_grid_oracle_2x2(ref.flat(), rho.vec(), sigma.vec());
    EXPECT_NEAR(r.value, oracle, 1e-9);
}

TEST(SinkhornBridge, MatchesGridOracleOnRandom2x2) {
    std::mt19937_64 rng(2718);
    for (int rep = 0; rep < 60; ++rep) {
        Coupling ref = random_full_support_coupling(rng, 2, 2);
        Dist rho = testsup::random_dist(rng, 2), sigma = testsup::random_dist(rng, 2);
        BridgeResult r = sinkhorn_bridge(ref, rho, sigma);
        ASSERT_TRUE(r.converged);
        double oracle = testsup::bridge_grid_oracle_2x2(ref.flat(), rho.vec(), sigma.vec());
        EXPECT_NEAR(r.value, oracle, 1e-8);
        EXPECT_LE(r.marginal_error, 1e-10);
        // duality bracket encloses the optimum
        EXPECT_LE(r.value_lower, oracle + 1e-9);
        EXPECT_GE(r.value_upper, oracle - 1e-9);
    }
}

TEST(SinkhornBridge, ReturnedCouplingValueSelfConsistent) {
    std::mt19937_64 rng(44);
    for (int rep = 0; rep < 30; ++rep) {
        std::size_t n = 2 + rng() % 3;
        Coupling ref = random_full_support_coupling(rng, n, n);
        Dist rho = testsup::random_dist(rng, n), sigma = testsup::random_dist(rng, n);
        BridgeResult r = sinkhorn_bridge(ref, rho, sigma);
        ASSERT_TRUE(r.converged);
        EXPECT_NEAR(r.value, relative_entropy(r.coupling, ref), 1e-10);
        auto sm = r.coupling.source_marginal();
        auto tm = r.coupling.target_marginal();
        double err = 0;
        for (std::size_t i = 0; i < n; ++i) err += std::abs(sm[i] - rho[i]);
        for (std::size_t j = 0; j < n; ++j) err += std::abs(tm[j] - sigma[j]);
        EXPECT_LE(err, 1e-9);
    }
}

// bridge optimal value is jointly convex in the pair of marginals
TEST(SinkhornBridge, MidpointConvexityInMarginals) {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 25; ++rep) {
        std::size_t n = 2 + rng() % 2;
        Coupling ref = random_full_support_coupling(rng, n, n);
        Dist r1 = testsup::random_dist(rng, n), r2 = testsup::random_dist(rng, n);
        Dist s1 = testsup::random_dist(rng, n), s2 = testsup::random_dist(rng, n);
        auto mid = [](const Dist& a, const Dist& b) {
            std::vector<double> w(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) w[i] = 0.5 * (a[i] + b[i]);
            return Dist(std::move(w));
        };
        double v1 = sinkhorn_bridge(ref, r1, s1).value;
        double v2 = sinkhorn_bridge(ref, r2, s2).value;
        double vm = sinkhorn_bridge(ref, mid(r1, r2), mid(s1, s2)).value;
        EXPECT_LE(vm, 0.5 * v1 + 0.5 * v2 + 1e-8);
    }
}

TEST(SinkhornBridge, SupportPatternInfeasibilityDetected) {
    // rows and columns of the reference all carry mass, but the only cells
    // that could feed column 1 sit in a rho-null row: no feasible coupling
    Coupling ref = Coupling::from_rows({{0.5, 0.0}, {0.0, 0.5}});
    Dist rho(std::vector<double>{1.0, 0.0}), sigma(std::vector<double>{0.5, 0.5});
    BridgeResult r = sinkhorn_bridge(ref, rho, sigma);
    EXPECT_FALSE(r.feasible);
    EXPECT_EQ(r.value, kInf);
}

TEST(SinkhornBridge, NearDeterministicReferenceStillConverges) {
    // log-domain iteration must survive tiny reference entries
    Coupling ref(2, 2, std::vector<double>{0.5 - 1e-13, 1e-13, 1e-13, 0.5 - 1e-13});
    Dist rho(std::vector<double>{0.4, 0.6}), sigma(std::vector<double>{0.35, 0.65});
    BridgeResult r = sinkhorn_bridge(ref, rho, sigma);
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(std::isfinite(r.value));
    double oracle = testsup::bridge_grid_oracle_2x2(ref.flat(), rho.vec(), sigma.vec());
    EXPECT_NEAR(r.value, oracle, 1e-7);
}
