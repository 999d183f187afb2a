#pragma once
// Generation strategies: repeated sampling, chain-of-thought, IdeaSearch,
// PlanSearch (observation-tree search) and backtranslation.
//
// Every stage is a fresh single-turn conversation carrying only the problem
// and the artifacts that stage needs. Calls fan out through the gateway's
// bounded batch facility; results come back positionally, so candidate
// order never depends on completion order.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "plansearch/corpus.hpp"
#include "plansearch/llm.hpp"
#include "plansearch/prompts.hpp"

namespace plansearch::search {

enum class Method { repeated_sampling, cot, idea_search, plansearch, backtranslation, conditioning };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

enum class SketchOrigin { idea_search, plansearch_direct, plansearch_criticized, backtranslated };

std::string_view to_string(SketchOrigin o);
SketchOrigin sketch_origin_from_string(std::string_view s);

struct Observation {
    std::string text;
    int depth = 1;                             // 1 or 2
    std::optional<std::size_t> parent_combo;   // set for depth-2 observations
};

// A subset (|members| <= S) of one observation pool.
struct ObservationCombo {
    std::size_t id = 0;
    int depth = 1;
    std::size_t pool = 0;
    std::vector<std::size_t> members;          // indices into the pool, ascending
    std::vector<Observation> observations;     // resolved members
    std::optional<std::size_t> parent;         // depth-1 combo this one derives from
};

struct ObservationPool {
    int depth = 1;
    std::optional<std::size_t> source_combo;   // depth-1 combo that seeded a depth-2 pool
    std::vector<Observation> observations;
    std::size_t tokens_out = 0;
};

struct ObservationTree {
    std::string problem_id;
    int depth_limit = 2;
    std::size_t max_subset = 2;
    std::vector<ObservationPool> pools;        // pools[0] holds the first-order observations
    std::vector<ObservationCombo> combos;      // indexed by id

    std::vector<std::size_t> leaves() const;
    // Combos from depth 1 down to `combo`.
    std::vector<ObservationCombo> path_to(std::size_t combo) const;
    // Observations along the path, parent's first.
    std::vector<Observation> path_observations(std::size_t combo) const;
    std::size_t tokens_out_total() const;
};

struct Sketch {
    std::string text;
    SketchOrigin origin = SketchOrigin::idea_search;
    std::optional<std::size_t> source_combo;
    bool duplicate_of_source = false;          // criticism returned the input unchanged
    std::size_t tokens_out = 0;                // tokens of the call that produced this sketch
};

struct SolutionCandidate {
    std::string problem_id;
    Method method = Method::repeated_sampling;
    std::optional<std::string> code;
    bool format_ok = false;
    std::optional<Sketch> sketch;
    std::vector<ObservationCombo> combo_path;
    std::size_t tokens_out_total = 0;
    std::size_t sample_index = 0;
    std::optional<std::string> pseudocode;
    std::optional<std::string> error;          // provider failure that degraded this candidate
};

nlohmann::json to_json(const Observation& o);
nlohmann::json to_json(const ObservationCombo& c);
nlohmann::json to_json(const ObservationTree& t);
nlohmann::json to_json(const Sketch& s);
nlohmann::json to_json(const SolutionCandidate& c);
Observation observation_from_json(const nlohmann::json& j);
ObservationCombo combo_from_json(const nlohmann::json& j);
ObservationTree tree_from_json(const nlohmann::json& j);
Sketch sketch_from_json(const nlohmann::json& j);
SolutionCandidate candidate_from_json(const nlohmann::json& j);

// Everything a strategy needs to talk to the model.
struct SearchContext {
    llm::Gateway& gateway;
    const PromptTemplates& prompts;
    std::string model;
    llm::SamplingParams params;
    std::size_t batch_limit = 8;
};

// ─── parsing ──────────────────────────────────────────────────

// Contents of the last complete fenced block, fence and language tag
// stripped. nullopt (a format error) when there is no block or it is blank.
std::optional<std::string> extract_code(std::string_view response_text);

// Numbered lines, else bulleted lines, else two or more blank-line separated
// paragraphs. A single block of prose yields nothing.
std::vector<std::string> parse_observation_list(std::string_view text);

// All subsets of size <= max_size including the empty one, in lexicographic
// order of member indices. Ids are positional.
std::vector<std::vector<std::size_t>> enumerate_subset_indices(std::size_t n, std::size_t max_size);
std::vector<ObservationCombo> enumerate_subsets(std::span<const Observation> observations,
                                                std::size_t max_size);

// ─── baselines ────────────────────────────────────────────────

std::vector<SolutionCandidate> repeated_sampling(const SearchContext& ctx, const corpus::Problem& problem,
                                                 std::size_t n);
std::vector<SolutionCandidate> chain_of_thought(const SearchContext& ctx, const corpus::Problem& problem,
                                                std::size_t n);
std::vector<SolutionCandidate> idea_search(const SearchContext& ctx, const corpus::Problem& problem,
                                           std::size_t n);

// ─── PlanSearch ───────────────────────────────────────────────

struct PlanSearchConfig {
    std::size_t max_subset = 2;   // S
    int depth = 2;                // L
    bool via_pseudocode = true;

    void validate() const;
};

// Depth-1 generation when `prior` is null, depth-2 otherwise. Unparsable
// output gives an empty list (logged).
std::vector<Observation> generate_observations(const SearchContext& ctx, const corpus::Problem& problem,
                                               const ObservationCombo* prior, std::size_t sample_index = 0);

// Throws SketchEmpty on an empty response.
Sketch observations_to_sketch(const SearchContext& ctx, const corpus::Problem& problem,
                              std::span<const Observation> observations, std::optional<std::size_t> combo_id,
                              std::size_t sample_index = 0);

// Revised sketch with origin plansearch_criticized. Throws SketchEmpty on refusal.
Sketch criticize_sketch(const SearchContext& ctx, const corpus::Problem& problem, const Sketch& sketch,
                        std::size_t sample_index = 0);

SolutionCandidate sketch_to_code(const SearchContext& ctx, const corpus::Problem& problem, const Sketch& sketch,
                                 bool via_pseudocode, std::size_t sample_index = 0,
                                 Method method = Method::plansearch);

struct PlanSearchResult {
    ObservationTree tree;
    std::vector<SolutionCandidate> candidates;
    std::size_t skipped_leaves = 0;        // empty direct sketch
    std::size_t dropped_criticisms = 0;    // empty criticism
};

PlanSearchResult plan_search(const SearchContext& ctx, const corpus::Problem& problem,
                             const PlanSearchConfig& cfg = {});

// ─── backtranslation / conditioning ───────────────────────────

// Throws std::invalid_argument for word_budget == 0 and SketchEmpty on refusal.
Sketch backtranslate(const SearchContext& ctx, const corpus::Problem& problem, std::string_view passing_code,
                     std::size_t word_budget, std::size_t sample_index = 0);

SolutionCandidate implement_from_sketch(const SearchContext& ctx, const corpus::Problem& problem,
                                        const Sketch& sketch, std::size_t sample_index = 0,
                                        Method method = Method::idea_search);

// One implementation per sample index, batched.
std::vector<SolutionCandidate> implement_many(const SearchContext& ctx, const corpus::Problem& problem,
                                              const Sketch& sketch, std::size_t samples, Method method);

// IdeaSearch sketch stage alone: `count` independent sketches (nullopt where
// the model refused or the call failed).
std::vector<std::optional<Sketch>> generate_sketches(const SearchContext& ctx, const corpus::Problem& problem,
                                                     std::size_t count);

}  // namespace plansearch::search
