#pragma once
// Idea-space diversity: every unordered pair of programs is judged similar
// or not, and D = 1 - (similar pairs) / (all pairs). Large pools are first
// cut down to a seeded uniform subsample.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "plansearch/corpus.hpp"
#include "plansearch/llm.hpp"
#include "plansearch/prompts.hpp"

namespace plansearch::diversity {

inline constexpr std::size_t kDefaultSubsample = 40;

// A program plus its natural-language (backtranslated) idea.
struct JudgeItem {
    std::string code;
    std::string idea;
};

struct SimilarityJudgment {
    std::size_t i = 0;  // i < j, positions in the judged pool
    std::size_t j = 0;
    bool similar = false;
    std::string judge_raw;
    bool unparsable = false;  // defaulted to not-similar after a failed reprompt
};

nlohmann::json to_json(const SimilarityJudgment& s);

using IndexPair = std::pair<std::size_t, std::size_t>;

class PairJudge {
public:
    virtual ~PairJudge() = default;
    // One judgment per pair, positionally aligned.
    virtual std::vector<SimilarityJudgment> judge_pairs(const corpus::Problem& problem,
                                                        std::span<const JudgeItem> items,
                                                        std::span<const IndexPair> pairs) = 0;
};

// "Yes." / "no" / "**YES**" ... ; nullopt when the reply starts with neither.
std::optional<bool> parse_judgment(std::string_view reply);

// Asks the model through the gateway. Unparsable replies get one follow-up
// turn; a second miss (or a provider failure) counts as not similar and is
// flagged. AuthError and BudgetExceeded propagate.
class LlmJudge : public PairJudge {
public:
    LlmJudge(llm::Gateway& gateway, const search::PromptTemplates& prompts, std::string model,
             llm::SamplingParams params, std::size_t batch_limit = 8);

    std::vector<SimilarityJudgment> judge_pairs(const corpus::Problem& problem, std::span<const JudgeItem> items,
                                                std::span<const IndexPair> pairs) override;

private:
    llm::Gateway& gateway_;
    const search::PromptTemplates& prompts_;
    std::string model_;
    llm::SamplingParams params_;
    std::size_t batch_limit_;
};

struct DiversityResult {
    std::string problem_id;
    double D = 0.0;
    std::size_t pool_size = 0;
    std::vector<std::size_t> working_set;  // pool indices actually judged, ascending
    bool sampled = false;
    std::optional<std::uint64_t> seed;     // set when sampled
    std::size_t similar_pairs = 0;
    std::size_t total_pairs = 0;
    std::size_t unparsable = 0;
    std::vector<SimilarityJudgment> judgments;  // indices refer to the pool
};

nlohmann::json to_json(const DiversityResult& r);

// Throws TooFewCandidates for fewer than two items.
DiversityResult diversity_score(const corpus::Problem& problem, std::span<const JudgeItem> items, PairJudge& judge,
                                std::uint64_t seed, std::size_t max_pool = kDefaultSubsample);

// (k - 1) n / (k n - 1): k equal cliques of n programs each, judged similar
// exactly within a clique. Throws std::domain_error unless k, n >= 1, kn >= 2.
double clique_diversity(std::size_t k, std::size_t n);

struct DiversityReport {
    std::map<std::string, double> per_problem_D;
    double dataset_D = 0.0;
    bool sampled = false;
    std::uint64_t seed = 0;
    std::size_t unparsable = 0;
};

DiversityReport summarize(std::span<const DiversityResult> results, std::uint64_t seed);
nlohmann::json to_json(const DiversityReport& r);

// ─── diversity vs. search gain ────────────────────────────────

struct RunSummary {
    std::string method;
    std::string model;
    double D = 0.0;
    double pass1 = 0.0;
    double pass200 = 0.0;
};

struct GainRow {
    RunSummary run;
    std::optional<double> gain;  // pass200 / pass1; undefined when pass1 == 0
};

struct GainReport {
    std::vector<GainRow> rows;
    std::optional<double> rank_correlation;  // Spearman over rows with a defined gain
    std::string correlation_note;            // why the correlation is undefined, if it is
};

// Throws InsufficientRuns for fewer than three runs.
GainReport diversity_gain_report(std::span<const RunSummary> runs);

// Average ranks (1-based), ties share the mean rank.
std::vector<double> average_ranks(std::span<const double> values);

// Spearman rank correlation; nullopt when either side is constant or the
// sizes differ or there are fewer than two points.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

// CSV columns: method,model,D,pass1,pass200,gain (gain empty when undefined)
void write_gain_csv(std::ostream& out, const GainReport& report);
nlohmann::json to_json(const GainReport& report);

}  // namespace plansearch::diversity
