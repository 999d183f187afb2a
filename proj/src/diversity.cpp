#include "plansearch/diversity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <boost/math/statistics/bivariate_statistics.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "plansearch/errors.hpp"

namespace plansearch::diversity {

using nlohmann::json;

json to_json(const SimilarityJudgment& s) {
    return {{"i", s.i}, {"j", s.j}, {"similar", s.similar}, {"judge_raw", s.judge_raw}, {"unparsable", s.unparsable}};
}

std::optional<bool> parse_judgment(std::string_view reply) {
    // Skip leading markup/punctuation, then read one word.
    std::size_t pos = 0;
    while (pos < reply.size() && !std::isalpha(static_cast<unsigned char>(reply[pos]))) ++pos;
    std::string word;
    while (pos < reply.size() && std::isalpha(static_cast<unsigned char>(reply[pos]))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(reply[pos]))));
        ++pos;
    }
    if (word == "yes") return true;
    if (word == "no") return false;
    return std::nullopt;
}

namespace {

// Auth and budget failures stop the report; anything else is one bad pair.
std::string describe_failure(const std::exception_ptr& error) {
    try {
        std::rethrow_exception(error);
    } catch (const AuthError&) {
        throw;
    } catch (const BudgetExceeded&) {
        throw;
    } catch (const std::exception& e) {
        return e.what();
    } catch (...) {
        return "unknown error";
    }
}

}  // namespace

LlmJudge::LlmJudge(llm::Gateway& gateway, const search::PromptTemplates& prompts, std::string model,
                   llm::SamplingParams params, std::size_t batch_limit)
    : gateway_(gateway), prompts_(prompts), model_(std::move(model)), params_(params), batch_limit_(batch_limit) {}

std::vector<SimilarityJudgment> LlmJudge::judge_pairs(const corpus::Problem& problem, std::span<const JudgeItem> items,
                                                      std::span<const IndexPair> pairs) {
    std::vector<llm::ChatRequest> first;
    first.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
        const std::string user = search::render(prompts_.get("judge_user"), {{"problem", problem.statement},
                                                                             {"code_a", items[i].code},
                                                                             {"idea_a", items[i].idea},
                                                                             {"code_b", items[j].code},
                                                                             {"idea_b", items[j].idea}});
        first.push_back(llm::make_request(model_, prompts_.get("judge_system"), user, params_, 0));
    }
    const auto replies = gateway_.complete_batch(first, batch_limit_);

    std::vector<SimilarityJudgment> out(pairs.size());
    std::vector<std::size_t> retry;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        out[p].i = pairs[p].first;
        out[p].j = pairs[p].second;
        if (!replies[p].ok()) {
            out[p].judge_raw = describe_failure(replies[p].error);
            out[p].unparsable = true;
            continue;
        }
        out[p].judge_raw = replies[p].response->text;
        if (auto verdict = parse_judgment(out[p].judge_raw)) {
            out[p].similar = *verdict;
        } else {
            retry.push_back(p);
        }
    }
    if (retry.empty()) return out;

    // One follow-up turn in the same conversation.
    std::vector<llm::ChatRequest> second;
    second.reserve(retry.size());
    for (std::size_t p : retry) {
        llm::ChatRequest req = first[p];
        req.turns.push_back({llm::Role::assistant, out[p].judge_raw});
        req.turns.push_back({llm::Role::user, prompts_.get("judge_reprompt")});
        second.push_back(std::move(req));
    }
    const auto again = gateway_.complete_batch(second, batch_limit_);
    for (std::size_t r = 0; r < retry.size(); ++r) {
        auto& judgment = out[retry[r]];
        std::optional<bool> verdict;
        if (again[r].ok()) {
            judgment.judge_raw += "\n---\n" + again[r].response->text;
            verdict = parse_judgment(again[r].response->text);
        } else {
            judgment.judge_raw += "\n---\n" + describe_failure(again[r].error);
        }
        if (verdict) {
            judgment.similar = *verdict;
        } else {
            judgment.unparsable = true;
            spdlog::warn("{}: unparsable judgment for pair ({}, {}); counted as not similar", problem.id, judgment.i,
                         judgment.j);
        }
    }
    return out;
}

json to_json(const DiversityResult& r) {
    json judgments = json::array();
    for (const auto& s : r.judgments) judgments.push_back(to_json(s));
    json j = {{"problem_id", r.problem_id},
              {"D", r.D},
              {"pool_size", r.pool_size},
              {"working_set", r.working_set},
              {"sampled", r.sampled},
              {"similar_pairs", r.similar_pairs},
              {"total_pairs", r.total_pairs},
              {"unparsable", r.unparsable},
              {"judgments", std::move(judgments)}};
    j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
    return j;
}

DiversityResult diversity_score(const corpus::Problem& problem, std::span<const JudgeItem> items, PairJudge& judge,
                                std::uint64_t seed, std::size_t max_pool) {
    if (items.size() < 2) {
        throw TooFewCandidates(fmt::format("{}: diversity needs at least 2 programs, got {}", problem.id, items.size()));
    }
    if (max_pool < 2) throw std::invalid_argument("subsample size must be at least 2");

    DiversityResult result;
    result.problem_id = problem.id;
    result.pool_size = items.size();
    std::vector<std::size_t> all(items.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (items.size() > max_pool) {
        std::mt19937_64 rng(seed);
        std::sample(all.begin(), all.end(), std::back_inserter(result.working_set), max_pool, rng);
        result.sampled = true;
        result.seed = seed;
    } else {
        result.working_set = std::move(all);
    }

    std::vector<IndexPair> pairs;
    const auto& ws = result.working_set;
    for (std::size_t a = 0; a < ws.size(); ++a) {
        for (std::size_t b = a + 1; b < ws.size(); ++b) pairs.emplace_back(ws[a], ws[b]);
    }
    result.judgments = judge.judge_pairs(problem, items, pairs);
    if (result.judgments.size() != pairs.size()) throw std::logic_error("judge returned the wrong number of judgments");

    result.total_pairs = pairs.size();
    for (const auto& s : result.judgments) {
        if (s.similar) ++result.similar_pairs;
        if (s.unparsable) ++result.unparsable;
    }
    // different / total rather than 1 - similar / total: one correctly rounded
    // division, so structured pools reproduce their closed forms exactly.
    result.D = static_cast<double>(result.total_pairs - result.similar_pairs) / static_cast<double>(result.total_pairs);
    return result;
}

double clique_diversity(std::size_t k, std::size_t n) {
    if (k < 1 || n < 1 || k * n < 2) throw std::domain_error("clique diversity needs k, n >= 1 and kn >= 2");
    const auto kd = static_cast<double>(k);
    const auto nd = static_cast<double>(n);
    return (kd - 1.0) * nd / (kd * nd - 1.0);
}

DiversityReport summarize(std::span<const DiversityResult> results, std::uint64_t seed) {
    DiversityReport report;
    report.seed = seed;
    if (results.empty()) return report;
    double sum = 0.0;
    for (const auto& r : results) {
        report.per_problem_D[r.problem_id] = r.D;
        report.sampled = report.sampled || r.sampled;
        report.unparsable += r.unparsable;
        sum += r.D;
    }
    report.dataset_D = sum / static_cast<double>(results.size());
    return report;
}

json to_json(const DiversityReport& r) {
    return {{"per_problem_D", r.per_problem_D},
            {"dataset_D", r.dataset_D},
            {"sampled", r.sampled},
            {"seed", r.seed},
            {"unparsable_judgments", r.unparsable}};
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) return std::nullopt;
    auto constant = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
    };
    if (constant(x) || constant(y)) return std::nullopt;
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return boost::math::statistics::correlation_coefficient(rx, ry);
}

GainReport diversity_gain_report(std::span<const RunSummary> runs) {
    if (runs.size() < 3) {
        throw InsufficientRuns(fmt::format("diversity/gain correlation needs at least 3 runs, got {}", runs.size()));
    }
    GainReport report;
    std::vector<double> d;
    std::vector<double> g;
    for (const auto& run : runs) {
        GainRow row{run, std::nullopt};
        if (run.pass1 > 0.0) {
            row.gain = run.pass200 / run.pass1;
            d.push_back(run.D);
            g.push_back(*row.gain);
        }
        report.rows.push_back(std::move(row));
    }
    if (d.size() < 2) {
        report.correlation_note = "fewer than two runs with a nonzero pass@1";
    } else if (!(report.rank_correlation = spearman(d, g))) {
        report.correlation_note = "diversity or gain is constant across runs";
    }
    return report;
}

void write_gain_csv(std::ostream& out, const GainReport& report) {
    out << "method,model,D,pass1,pass200,gain\n";
    for (const auto& row : report.rows) {
        out << fmt::format("{},{},{},{},{},{}\n", row.run.method, row.run.model, row.run.D, row.run.pass1,
                           row.run.pass200, row.gain ? fmt::format("{}", *row.gain) : std::string{});
    }
}

json to_json(const GainReport& report) {
    json rows = json::array();
    for (const auto& row : report.rows) {
        rows.push_back({{"method", row.run.method},
                        {"model", row.run.model},
                        {"D", row.run.D},
                        {"pass1", row.run.pass1},
                        {"pass200", row.run.pass200},
                        {"gain", row.gain ? json(*row.gain) : json(nullptr)}});
    }
    json j = {{"rows", std::move(rows)}};
    j["rank_correlation"] = report.rank_correlation ? json(*report.rank_correlation) : json(nullptr);
    if (!report.correlation_note.empty()) j["correlation_note"] = report.correlation_note;
    return j;
}

}  // namespace plansearch::diversity
