#include "plansearch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

#include <fmt/format.h>
#include <omp.h>

#include "plansearch/errors.hpp"

namespace plansearch::metrics {

using nlohmann::json;

void ProblemStats::validate() const {
    if (c > n) throw std::domain_error(problem_id + ": c > n");
    if (n_filtered > n) throw std::domain_error(problem_id + ": n_filtered > n");
    if (c_filtered > n_filtered) throw std::domain_error(problem_id + ": c_filtered > n_filtered");
}

json to_json(const ProblemStats& s) {
    return {{"problem_id", s.problem_id}, {"n", s.n}, {"c", s.c}, {"n_filtered", s.n_filtered},
            {"c_filtered", s.c_filtered}, {"tokens_out_total", s.tokens_out_total}};
}

ProblemStats problem_stats_from_json(const json& j) {
    ProblemStats s;
    s.problem_id = j.at("problem_id").get<std::string>();
    s.n = j.at("n").get<std::size_t>();
    s.c = j.at("c").get<std::size_t>();
    s.n_filtered = j.at("n_filtered").get<std::size_t>();
    s.c_filtered = j.at("c_filtered").get<std::size_t>();
    s.tokens_out_total = j.value("tokens_out_total", std::size_t{0});
    return s;
}

double pass_at_k_naive(double p, std::size_t k) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("solve probability must be in [0, 1]");
    if (k == 0) throw std::domain_error("k must be >= 1");
    if (p == 1.0) return 1.0;
    // log1p/expm1 keep precision for small p
    return -std::expm1(static_cast<double>(k) * std::log1p(-p));
}

double pass_at_k_unbiased(std::size_t n, std::size_t c, std::size_t k) {
    if (k == 0) throw std::domain_error("k must be >= 1");
    if (c > n) throw std::domain_error("c must not exceed n");
    if (k > n) n = k;  // padded draws are failures
    if (n - c < k) return 1.0;
    // C(n-c, k) / C(n, k) = prod_{i<k} (n-c-i) / (n-i)
    double ratio = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
        ratio *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    }
    return 1.0 - ratio;
}

double dataset_pass_at_k(std::span<const ProblemStats> stats, std::size_t k) {
    if (stats.empty()) throw EmptyDataset("no problem statistics to average");
    double sum = 0.0;
    for (const auto& s : stats) sum += pass_at_k_unbiased(s.n, s.c, k);
    return sum / static_cast<double>(stats.size());
}

double dataset_pass_at_k_naive(std::span<const double> solve_probabilities, std::size_t k) {
    if (solve_probabilities.empty()) throw EmptyDataset("no solve probabilities to average");
    double sum = 0.0;
    for (double p : solve_probabilities) sum += pass_at_k_naive(p, k);
    return sum / static_cast<double>(solve_probabilities.size());
}

double filtered_pass_at_k(const ProblemStats& stats, std::size_t k) {
    if (stats.n_filtered == 0) return 0.0;
    return pass_at_k_unbiased(stats.n_filtered, stats.c_filtered, k);
}

std::vector<std::size_t> k_grid(std::size_t max_k) {
    std::vector<std::size_t> ks(max_k);
    for (std::size_t i = 0; i < max_k; ++i) ks[i] = i + 1;
    return ks;
}

namespace {

double problem_value(const ProblemStats& s, std::size_t k, bool filtered) {
    return filtered ? filtered_pass_at_k(s, k) : pass_at_k_unbiased(s.n, s.c, k);
}

double curve_point(std::span<const ProblemStats> stats, std::size_t k, bool filtered) {
    double sum = 0.0;
    for (const auto& s : stats) sum += problem_value(s, k, filtered);
    return sum / static_cast<double>(stats.size());
}

double naive_point(std::span<const double> ps, std::size_t k) {
    double sum = 0.0;
    for (double p : ps) sum += pass_at_k_naive(p, k);
    return sum / static_cast<double>(ps.size());
}

Curve empty_curve(std::string label, std::span<const std::size_t> ks, bool filtered) {
    Curve curve;
    curve.label = std::move(label);
    curve.filtered = filtered;
    curve.x.reserve(ks.size());
    for (auto k : ks) curve.x.push_back(static_cast<double>(k));
    curve.y.assign(ks.size(), 0.0);
    return curve;
}

void check_grid(std::span<const std::size_t> ks) {
    for (auto k : ks) {
        if (k == 0) throw std::domain_error("k grid entries must be >= 1");
    }
}

constexpr std::size_t kSimulationChunks = 256;

double simulate_chunk(std::size_t chunk, std::size_t n, double p, std::size_t k, std::size_t batches,
                      std::uint64_t seed) {
    const std::size_t begin = chunk * batches / kSimulationChunks;
    const std::size_t end = (chunk + 1) * batches / kSimulationChunks;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chunk)};
    std::mt19937_64 rng(seq);
    std::binomial_distribution<std::size_t> draws(n, p);
    double sum = 0.0;
    for (std::size_t b = begin; b < end; ++b) sum += pass_at_k_unbiased(n, draws(rng), k);
    return sum;
}

void check_simulation(std::size_t n, double p, std::size_t k, std::size_t batches) {
    if (n == 0 || k == 0 || batches == 0) throw std::domain_error("simulation needs n, k, batches >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("p must be in [0, 1]");
}

}  // namespace

Curve pass_at_k_curve(std::string label, std::span<const ProblemStats> stats, std::span<const std::size_t> ks,
                      bool filtered) {
    if (stats.empty()) throw EmptyDataset("no problem statistics for curve '" + label + "'");
    check_grid(ks);
    Curve curve = empty_curve(std::move(label), ks, filtered);
    const auto m = static_cast<std::ptrdiff_t>(ks.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) curve.y[i] = curve_point(stats, ks[i], filtered);
    return curve;
}

Curve naive_curve(std::string label, std::span<const double> solve_probabilities, std::span<const std::size_t> ks) {
    if (solve_probabilities.empty()) throw EmptyDataset("no solve probabilities for curve '" + label + "'");
    check_grid(ks);
    for (double p : solve_probabilities) pass_at_k_naive(p, 1);  // domain check before going parallel
    Curve curve = empty_curve(std::move(label), ks, false);
    const auto m = static_cast<std::ptrdiff_t>(ks.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) curve.y[i] = naive_point(solve_probabilities, ks[i]);
    return curve;
}

double simulate_estimator_mean(std::size_t n, double p, std::size_t k, std::size_t batches, std::uint64_t seed) {
    check_simulation(n, p, k, batches);
    std::vector<double> partial(kSimulationChunks, 0.0);
    const auto chunks = static_cast<std::ptrdiff_t>(kSimulationChunks);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t c = 0; c < chunks; ++c) partial[c] = simulate_chunk(c, n, p, k, batches, seed);
    double sum = 0.0;
    for (double s : partial) sum += s;
    return sum / static_cast<double>(batches);
}

namespace serial {

Curve pass_at_k_curve(std::string label, std::span<const ProblemStats> stats, std::span<const std::size_t> ks,
                      bool filtered) {
    if (stats.empty()) throw EmptyDataset("no problem statistics for curve '" + label + "'");
    check_grid(ks);
    Curve curve = empty_curve(std::move(label), ks, filtered);
    for (std::size_t i = 0; i < ks.size(); ++i) curve.y[i] = curve_point(stats, ks[i], filtered);
    return curve;
}

Curve naive_curve(std::string label, std::span<const double> solve_probabilities, std::span<const std::size_t> ks) {
    if (solve_probabilities.empty()) throw EmptyDataset("no solve probabilities for curve '" + label + "'");
    check_grid(ks);
    Curve curve = empty_curve(std::move(label), ks, false);
    for (std::size_t i = 0; i < ks.size(); ++i) curve.y[i] = naive_point(solve_probabilities, ks[i]);
    return curve;
}

double simulate_estimator_mean(std::size_t n, double p, std::size_t k, std::size_t batches, std::uint64_t seed) {
    check_simulation(n, p, k, batches);
    double sum = 0.0;
    for (std::size_t c = 0; c < kSimulationChunks; ++c) sum += simulate_chunk(c, n, p, k, batches, seed);
    return sum / static_cast<double>(batches);
}

}  // namespace serial

std::optional<std::size_t> naive_crossover(std::span<const double> set_a, std::span<const double> set_b,
                                           std::size_t max_k) {
    for (std::size_t k = 1; k <= max_k; ++k) {
        if (dataset_pass_at_k_naive(set_b, k) > dataset_pass_at_k_naive(set_a, k)) return k;
    }
    return std::nullopt;
}

Curve relative_improvement(const Curve& curve, double baseline_pass1) {
    if (!(baseline_pass1 > 0.0)) throw ZeroBaseline("relative improvement needs a positive baseline pass@1");
    Curve out = curve;
    out.label = curve.label + " / baseline pass@1";
    for (double& y : out.y) y /= baseline_pass1;
    return out;
}

Curve compute_normalized_curve(const Curve& curve, double tokens_per_completion) {
    if (!(tokens_per_completion > 0.0)) throw std::invalid_argument("tokens per completion must be positive");
    Curve out = curve;
    for (double& x : out.x) x *= tokens_per_completion;
    return out;
}

double polarization(std::span<const double> rates) {
    if (rates.empty()) return 0.0;
    double sum = 0.0;
    for (double r : rates) sum += std::min(r, 1.0 - r);
    return sum / static_cast<double>(rates.size());
}

ConditionalRates conditional_solve_rates(std::span<const SketchGroup> groups) {
    if (groups.empty()) throw EmptyGroup("no sketch groups");
    ConditionalRates out;
    // problem id -> (sum of sketch rates, sketch count), in first-seen order
    std::vector<std::string> order;
    std::map<std::string, std::pair<double, std::size_t>> pooled;
    for (const auto& g : groups) {
        if (g.n == 0) {
            throw EmptyGroup(fmt::format("sketch {} of problem {} has no samples", g.sketch_index, g.problem_id));
        }
        if (g.c > g.n) throw std::domain_error("group has c > n");
        const double rate = static_cast<double>(g.c) / static_cast<double>(g.n);
        out.per_sketch.push_back({g.problem_id, g.sketch_index, rate});
        auto [it, inserted] = pooled.try_emplace(g.problem_id, 0.0, 0);
        if (inserted) order.push_back(g.problem_id);
        it->second.first += rate;
        it->second.second += 1;
    }
    std::vector<double> sketch_rates;
    for (const auto& s : out.per_sketch) sketch_rates.push_back(s.rate);
    std::vector<double> problem_rates;
    for (const auto& id : order) {
        const auto& [sum, count] = pooled.at(id);
        out.per_problem.push_back({id, sum / static_cast<double>(count)});
        problem_rates.push_back(out.per_problem.back().rate);
    }
    out.sketch_polarization = polarization(sketch_rates);
    out.problem_polarization = polarization(problem_rates);
    return out;
}

void write_curves_csv(std::ostream& out, std::span<const Curve> curves) {
    out << "method,k_or_tokens,value,filtered\n";
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < c.x.size(); ++i) {
            out << fmt::format("{},{},{},{}\n", c.label, c.x[i], c.y[i], c.filtered ? 1 : 0);
        }
    }
}

}  // namespace plansearch::metrics
