#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "plansearch/errors.hpp"
#include "plansearch/metrics.hpp"

using namespace plansearch;
using namespace plansearch::metrics;

TEST(PassAtK, MatchesBruteForceSubsets) {
    for (std::size_t n = 1; n <= 8; ++n) {
        for (std::size_t c = 0; c <= n; ++c) {
            for (std::size_t k = 1; k <= n; ++k) {
                EXPECT_NEAR(pass_at_k_unbiased(n, c, k), oracles::brute_force_pass_at_k(n, c, k), 1e-12)
                    << n << "," << c << "," << k;
            }
        }
    }
}

TEST(PassAtK, EdgeCases) {
    EXPECT_EQ(pass_at_k_unbiased(10, 0, 3), 0.0);
    EXPECT_EQ(pass_at_k_unbiased(10, 10, 3), 1.0);
    EXPECT_EQ(pass_at_k_unbiased(10, 8, 3), 1.0);  // fewer than k failures
    EXPECT_DOUBLE_EQ(pass_at_k_unbiased(10, 2, 1), 0.2);
    // k > n pads with failures: 2 of 12 draws pass, pick all 12 -> certain.
    EXPECT_EQ(pass_at_k_unbiased(4, 2, 12), 1.0);
    EXPECT_DOUBLE_EQ(pass_at_k_unbiased(4, 1, 5), 1.0);
    EXPECT_EQ(pass_at_k_unbiased(4, 0, 10), 0.0);
    EXPECT_THROW(pass_at_k_unbiased(3, 4, 1), std::domain_error);
    EXPECT_THROW(pass_at_k_unbiased(3, 1, 0), std::domain_error);
}

TEST(PassAtK, NaiveMatchesClosedForm) {
    for (std::size_t k = 1; k <= 500; ++k) {
        EXPECT_NEAR(pass_at_k_naive(0.04, k), 1.0 - std::pow(0.96, static_cast<double>(k)), 1e-12);
    }
    EXPECT_EQ(pass_at_k_naive(0.0, 5), 0.0);
    EXPECT_EQ(pass_at_k_naive(1.0, 5), 1.0);
    EXPECT_THROW(pass_at_k_naive(1.5, 1), std::domain_error);
}

TEST(PassAtK, DatasetMeanIsUnweighted) {
    std::vector<ProblemStats> s = {{"a", 10, 5, 0, 0, 0}, {"b", 100, 0, 0, 0, 0}};
    EXPECT_DOUBLE_EQ(dataset_pass_at_k(s, 1), 0.25);
    EXPECT_THROW(dataset_pass_at_k(std::span<const ProblemStats>{}, 1), EmptyDataset);
}

TEST(Filtering, WorkedExample) {
    ProblemStats s{"p", 10, 2, 4, 2, 0};
    EXPECT_DOUBLE_EQ(filtered_pass_at_k(s, 1), 0.5);
    EXPECT_DOUBLE_EQ(pass_at_k_unbiased(s.n, s.c, 1), 0.2);
    ProblemStats none{"q", 10, 0, 0, 0, 0};
    EXPECT_EQ(filtered_pass_at_k(none, 1), 0.0);
}

TEST(Filtering, NeverBelowUnfilteredAtOne) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        auto s = oracles::random_pool(rng);
        EXPECT_GE(filtered_pass_at_k(s, 1) + 1e-12, pass_at_k_unbiased(s.n, s.c, 1));
    }
}

TEST(Curves, ParallelEqualsSerialBitForBit) {
    std::mt19937_64 rng(3);
    std::vector<ProblemStats> stats;
    for (int i = 0; i < 200; ++i) stats.push_back(oracles::random_pool(rng));
    auto ks = k_grid(200);
    for (bool filtered : {false, true}) {
        auto a = pass_at_k_curve("m", stats, ks, filtered);
        auto b = serial::pass_at_k_curve("m", stats, ks, filtered);
        EXPECT_EQ(a.y, b.y);
        EXPECT_EQ(a.x, b.x);
    }
    std::vector<double> ps = {0.001, 0.3, 0.9};
    EXPECT_EQ(naive_curve("n", ps, ks).y, serial::naive_curve("n", ps, ks).y);
    EXPECT_EQ(simulate_estimator_mean(20, 0.3, 5, 5000, 9), serial::simulate_estimator_mean(20, 0.3, 5, 5000, 9));
}

TEST(Curves, MonotoneInK) {
    std::mt19937_64 rng(5);
    std::vector<ProblemStats> stats;
    for (int i = 0; i < 20; ++i) stats.push_back(oracles::random_pool(rng));
    auto ks = k_grid(60);
    auto c = pass_at_k_curve("m", stats, ks, false);
    for (std::size_t i = 1; i < c.y.size(); ++i) EXPECT_GE(c.y[i] + 1e-15, c.y[i - 1]);
}

TEST(Simulation, EstimatorIsUnbiasedSmallRun) {
    for (double p : {0.1, 0.5}) {
        for (std::size_t k : {1, 5, 10}) {
            EXPECT_NEAR(simulate_estimator_mean(20, p, k, 20000, 1), 1 - std::pow(1 - p, double(k)), 0.01);
        }
    }
}

TEST(Crossover, TwoSetExample) {
    std::vector<double> set1 = {0.001, 0.7, 0.9};
    std::vector<double> set2 = {0.05, 0.1, 0.25};
    EXPECT_NEAR(dataset_pass_at_k_naive(set1, 1), 0.534, 0.001);
    EXPECT_NEAR(dataset_pass_at_k_naive(set2, 1), 0.133, 0.001);
    auto k = naive_crossover(set1, set2, 200);
    ASSERT_TRUE(k);
    // Exact under the Bernoulli model: 0.6654 < 0.6700 at k = 10, 0.6918 > 0.6703 at k = 11.
    EXPECT_EQ(*k, oracles::naive_crossover_scan(set1, set2, 200));
    EXPECT_EQ(*k, 11u);
    // Set1 leads for every k below the crossover.
    EXPECT_EQ(naive_crossover(set1, set2, 10), std::nullopt);
}

TEST(Transforms, RelativeAndNormalized) {
    Curve c{"m", {1, 2, 3}, {0.2, 0.3, 0.4}, false};
    auto r = relative_improvement(c, 0.2);
    EXPECT_DOUBLE_EQ(r.y[2], 2.0);
    EXPECT_THROW(relative_improvement(c, 0.0), ZeroBaseline);
    auto n = compute_normalized_curve(c, 150.0);
    EXPECT_EQ(n.x, (std::vector<double>{150, 300, 450}));
    EXPECT_EQ(n.y, c.y);
    EXPECT_THROW(compute_normalized_curve(c, 0.0), std::invalid_argument);
}

TEST(Conditioning, RatesAndPolarization) {
    std::vector<SketchGroup> g = {{"a", 0, 10, 10}, {"a", 1, 10, 0}, {"b", 0, 4, 1}};
    auto r = conditional_solve_rates(g);
    ASSERT_EQ(r.per_sketch.size(), 3u);
    ASSERT_EQ(r.per_problem.size(), 2u);
    EXPECT_DOUBLE_EQ(r.per_problem[0].rate, 0.5);
    EXPECT_DOUBLE_EQ(r.per_problem[1].rate, 0.25);
    EXPECT_DOUBLE_EQ(r.sketch_polarization, (0.0 + 0.0 + 0.25) / 3);
    EXPECT_DOUBLE_EQ(r.problem_polarization, (0.5 + 0.25) / 2);
    std::vector<SketchGroup> bad = {{"a", 0, 0, 0}};
    EXPECT_THROW(conditional_solve_rates(bad), EmptyGroup);
    EXPECT_THROW(conditional_solve_rates({}), EmptyGroup);
}

TEST(CurvesCsv, StableFormat) {
    std::vector<Curve> cs = {{"rs", {1, 2}, {0.25, 0.5}, false}, {"rs", {1}, {1.0}, true}};
    std::ostringstream out;
    write_curves_csv(out, cs);
    EXPECT_EQ(out.str(), "method,k_or_tokens,value,filtered\nrs,1,0.25,0\nrs,2,0.5,0\nrs,1,1,1\n");
}
