#pragma once
// pass@k estimation and the analytics built on it.
//
// The data-parallel kernels (whole curves, estimator simulation) run under
// OpenMP; metrics::serial holds the straight-line reference versions the
// tests compare against. Both produce bit-identical results for any thread
// count: every reduction is split into fixed chunks combined in order.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace plansearch::metrics {

struct ProblemStats {
    std::string problem_id;
    std::size_t n = 0;            // samples drawn
    std::size_t c = 0;            // samples passing every test
    std::size_t n_filtered = 0;   // samples passing the public tests
    std::size_t c_filtered = 0;   // of those, samples passing every test
    std::size_t tokens_out_total = 0;

    void validate() const;
};

nlohmann::json to_json(const ProblemStats& s);
ProblemStats problem_stats_from_json(const nlohmann::json& j);

// 1 - (1 - p)^k. Throws std::domain_error outside p in [0,1], k >= 1.
double pass_at_k_naive(double p, std::size_t k);

// 1 - C(n-c, k) / C(n, k). When k > n the pool is padded to k with failures.
double pass_at_k_unbiased(std::size_t n, std::size_t c, std::size_t k);

// Unweighted mean of per-problem pass@k. Throws EmptyDataset.
double dataset_pass_at_k(std::span<const ProblemStats> stats, std::size_t k);
double dataset_pass_at_k_naive(std::span<const double> solve_probabilities, std::size_t k);

// pass@k over the public-filtered pool; 0 when nothing passed the public tests.
double filtered_pass_at_k(const ProblemStats& stats, std::size_t k);

// A curve over k or over a token budget.
struct Curve {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool filtered = false;
};

std::vector<std::size_t> k_grid(std::size_t max_k);

Curve pass_at_k_curve(std::string label, std::span<const ProblemStats> stats, std::span<const std::size_t> ks,
                      bool filtered);
Curve naive_curve(std::string label, std::span<const double> solve_probabilities, std::span<const std::size_t> ks);

// Mean of the unbiased estimator over `batches` simulated Bernoulli(p)
// batches of size n, seeded deterministically.
double simulate_estimator_mean(std::size_t n, double p, std::size_t k, std::size_t batches, std::uint64_t seed);

namespace serial {
Curve pass_at_k_curve(std::string label, std::span<const ProblemStats> stats, std::span<const std::size_t> ks,
                      bool filtered);
Curve naive_curve(std::string label, std::span<const double> solve_probabilities, std::span<const std::size_t> ks);
double simulate_estimator_mean(std::size_t n, double p, std::size_t k, std::size_t batches, std::uint64_t seed);
}  // namespace serial

// Smallest k in [1, max_k] where set b's naive dataset pass@k strictly
// exceeds set a's.
std::optional<std::size_t> naive_crossover(std::span<const double> set_a, std::span<const double> set_b,
                                           std::size_t max_k);

// Pointwise y / baseline_pass1. Throws ZeroBaseline.
Curve relative_improvement(const Curve& curve, double baseline_pass1);

// Re-keys k to k * tokens_per_completion. Throws std::invalid_argument for
// a non-positive rate.
Curve compute_normalized_curve(const Curve& curve, double tokens_per_completion);

// ─── conditioning on sketches ─────────────────────────────────

struct SketchGroup {
    std::string problem_id;
    std::size_t sketch_index = 0;
    std::size_t n = 0;  // implementations sampled from this sketch
    std::size_t c = 0;  // of those, passing every test
};

struct ConditionalRates {
    struct SketchRate {
        std::string problem_id;
        std::size_t sketch_index;
        double rate;
    };
    struct ProblemRate {
        std::string problem_id;
        double rate;
    };
    std::vector<SketchRate> per_sketch;    // P(solve | problem, sketch)
    std::vector<ProblemRate> per_problem;  // P(solve | problem), equal sketch weights
    double sketch_polarization = 0.0;      // mean of min(r, 1 - r) over sketches
    double problem_polarization = 0.0;     // same over problems
};

// Throws EmptyGroup for a group with n == 0 or an empty input.
ConditionalRates conditional_solve_rates(std::span<const SketchGroup> groups);

double polarization(std::span<const double> rates);

// CSV columns: method,k_or_tokens,value,filtered
void write_curves_csv(std::ostream& out, std::span<const Curve> curves);

}  // namespace plansearch::metrics
