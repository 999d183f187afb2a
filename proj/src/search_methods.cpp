#include <array>
#include <map>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "plansearch/errors.hpp"
#include "plansearch/search.hpp"

namespace plansearch::search {

using llm::BatchResult;
using llm::ChatRequest;
using llm::ChatResponse;

namespace {

// Auth and budget failures end the run; everything else degrades the one
// item that hit it.
std::string degrade(const std::exception_ptr& error) {
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

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

std::string trimmed(std::string_view s) {
    auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::string join_observations(std::span<const Observation> observations) {
    std::string out;
    for (const auto& o : observations) {
        if (!out.empty()) out += "\n\n";
        out += o.text;
    }
    return out;
}

ChatRequest request(const SearchContext& ctx, std::string_view system_name, std::string_view user_name,
                    const std::map<std::string, std::string>& values, std::size_t sample_index) {
    return llm::make_request(ctx.model, render(ctx.prompts.get(system_name), values),
                             render(ctx.prompts.get(user_name), values), ctx.params, sample_index);
}

std::vector<BatchResult> run_batch(const SearchContext& ctx, const std::vector<ChatRequest>& requests) {
    if (requests.empty()) return {};
    return ctx.gateway.complete_batch(requests, ctx.batch_limit);
}

SolutionCandidate candidate_from_response(const corpus::Problem& problem, Method method, std::size_t sample_index,
                                          const ChatResponse& response) {
    SolutionCandidate c;
    c.problem_id = problem.id;
    c.method = method;
    c.sample_index = sample_index;
    c.code = extract_code(response.text);
    c.format_ok = c.code.has_value();
    c.tokens_out_total = response.tokens_out;
    return c;
}

SolutionCandidate failed_candidate(const corpus::Problem& problem, Method method, std::size_t sample_index,
                                   std::string error) {
    SolutionCandidate c;
    c.problem_id = problem.id;
    c.method = method;
    c.sample_index = sample_index;
    c.format_ok = false;
    c.error = std::move(error);
    return c;
}

// One call per sample index, all from the same prompt pair.
std::vector<SolutionCandidate> single_call_samples(const SearchContext& ctx, const corpus::Problem& problem,
                                                   std::size_t n, Method method, std::string_view system_name,
                                                   std::string_view user_name) {
    if (n == 0) throw std::invalid_argument("sample count must be >= 1");
    std::vector<ChatRequest> requests;
    for (std::size_t i = 0; i < n; ++i) {
        requests.push_back(request(ctx, system_name, user_name, {{"problem", problem.statement}}, i));
    }
    auto results = run_batch(ctx, requests);
    std::vector<SolutionCandidate> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (results[i].ok()) {
            out.push_back(candidate_from_response(problem, method, i, *results[i].response));
        } else {
            out.push_back(failed_candidate(problem, method, i, degrade(results[i].error)));
        }
    }
    return out;
}

// ─── request builders shared by single calls and batches ──────

ChatRequest idea_request(const SearchContext& ctx, const corpus::Problem& problem, std::size_t sample_index) {
    return request(ctx, "idea_system", "idea_user", {{"problem", problem.statement}}, sample_index);
}

ChatRequest implement_request(const SearchContext& ctx, const corpus::Problem& problem, const Sketch& sketch,
                              std::size_t sample_index) {
    return request(ctx, "implement_system", "implement_user",
                   {{"problem", problem.statement}, {"sketch", sketch.text}}, sample_index);
}

ChatRequest observation_request(const SearchContext& ctx, const corpus::Problem& problem,
                                const ObservationCombo* prior, std::size_t sample_index) {
    if (prior == nullptr) {
        return request(ctx, "observation1_system", "observation1_user", {{"problem", problem.statement}},
                       sample_index);
    }
    return request(ctx, "observation2_system", "observation2_user",
                   {{"problem", problem.statement}, {"observations", join_observations(prior->observations)}},
                   sample_index);
}

ChatRequest sketch_request(const SearchContext& ctx, const corpus::Problem& problem,
                           std::span<const Observation> observations, std::size_t sample_index) {
    std::string section;
    if (!observations.empty()) {
        section = ctx.prompts.get("sketch_observations_header") + join_observations(observations) + "\n\n";
    }
    return request(ctx, "sketch_system", "sketch_user",
                   {{"problem", problem.statement}, {"observations", section}}, sample_index);
}

ChatRequest criticize_request(const SearchContext& ctx, const corpus::Problem& problem, const Sketch& sketch,
                              std::size_t sample_index) {
    return request(ctx, "criticize_system", "criticize_user",
                   {{"problem", problem.statement}, {"sketch", sketch.text}}, sample_index);
}

ChatRequest pseudocode_request(const SearchContext& ctx, const corpus::Problem& problem, const Sketch& sketch,
                               std::size_t sample_index) {
    return request(ctx, "pseudocode_system", "pseudocode_user",
                   {{"problem", problem.statement}, {"sketch", sketch.text}}, sample_index);
}

ChatRequest code_from_pseudocode_request(const SearchContext& ctx, const corpus::Problem& problem,
                                         const std::string& pseudocode, std::size_t sample_index) {
    return request(ctx, "code_from_pseudocode_system", "code_from_pseudocode_user",
                   {{"problem", problem.statement}, {"pseudocode", pseudocode}}, sample_index);
}

std::vector<Observation> observations_from_response(const ChatResponse& response, int depth,
                                                    std::optional<std::size_t> parent,
                                                    const std::string& problem_id) {
    std::vector<Observation> out;
    for (auto& text : parse_observation_list(response.text)) out.push_back({std::move(text), depth, parent});
    if (out.empty()) {
        spdlog::info("{}: no observations parsed at depth {} (ParseEmpty)", problem_id, depth);
    }
    return out;
}

Sketch criticized_from_response(const ChatResponse& response, const Sketch& source) {
    if (blank(response.text)) throw SketchEmpty("criticism response was empty");
    Sketch s;
    s.text = response.text;
    s.origin = SketchOrigin::plansearch_criticized;
    s.source_combo = source.source_combo;
    s.duplicate_of_source = trimmed(response.text) == trimmed(source.text);
    s.tokens_out = response.tokens_out;
    return s;
}

// Sketches → code, batched, with or without the pseudocode hop. `sketches`
// and `sample_indices` are aligned; candidates come back in the same order.
std::vector<SolutionCandidate> sketches_to_code(const SearchContext& ctx, const corpus::Problem& problem,
                                                const std::vector<Sketch>& sketches,
                                                const std::vector<std::size_t>& sample_indices,
                                                bool via_pseudocode, Method method) {
    const std::size_t n = sketches.size();
    std::vector<SolutionCandidate> out(n);
    std::vector<std::size_t> stage_tokens(n, 0);
    std::vector<std::optional<std::string>> pseudocode(n);
    std::vector<std::optional<std::string>> failure(n);

    std::vector<ChatRequest> final_requests;
    std::vector<std::size_t> final_owner;
    if (via_pseudocode) {
        std::vector<ChatRequest> reqs;
        for (std::size_t i = 0; i < n; ++i) reqs.push_back(pseudocode_request(ctx, problem, sketches[i], sample_indices[i]));
        auto results = run_batch(ctx, reqs);
        for (std::size_t i = 0; i < n; ++i) {
            if (!results[i].ok()) {
                failure[i] = degrade(results[i].error);
                continue;
            }
            stage_tokens[i] += results[i].response->tokens_out;
            pseudocode[i] = results[i].response->text;
            final_requests.push_back(code_from_pseudocode_request(ctx, problem, *pseudocode[i], sample_indices[i]));
            final_owner.push_back(i);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            final_requests.push_back(implement_request(ctx, problem, sketches[i], sample_indices[i]));
            final_owner.push_back(i);
        }
    }

    auto results = run_batch(ctx, final_requests);
    std::vector<std::optional<ChatResponse>> final_response(n);
    for (std::size_t r = 0; r < results.size(); ++r) {
        const std::size_t i = final_owner[r];
        if (results[r].ok()) {
            final_response[i] = *results[r].response;
        } else {
            failure[i] = degrade(results[r].error);
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        SolutionCandidate c;
        if (final_response[i]) {
            c = candidate_from_response(problem, method, sample_indices[i], *final_response[i]);
        } else {
            c = failed_candidate(problem, method, sample_indices[i], failure[i].value_or("no response"));
        }
        c.tokens_out_total += stage_tokens[i] + sketches[i].tokens_out;
        c.sketch = sketches[i];
        c.pseudocode = pseudocode[i];
        out[i] = std::move(c);
    }
    return out;
}

}  // namespace

// ─── baselines ────────────────────────────────────────────────

std::vector<SolutionCandidate> repeated_sampling(const SearchContext& ctx, const corpus::Problem& problem,
                                                 std::size_t n) {
    return single_call_samples(ctx, problem, n, Method::repeated_sampling, "repeated_sampling_system",
                               "repeated_sampling_user");
}

std::vector<SolutionCandidate> chain_of_thought(const SearchContext& ctx, const corpus::Problem& problem,
                                                std::size_t n) {
    return single_call_samples(ctx, problem, n, Method::cot, "cot_system", "cot_user");
}

std::vector<std::optional<Sketch>> generate_sketches(const SearchContext& ctx, const corpus::Problem& problem,
                                                     std::size_t count) {
    std::vector<ChatRequest> reqs;
    for (std::size_t i = 0; i < count; ++i) reqs.push_back(idea_request(ctx, problem, i));
    auto results = run_batch(ctx, reqs);
    std::vector<std::optional<Sketch>> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!results[i].ok()) {
            spdlog::warn("{}: sketch {} failed: {}", problem.id, i, degrade(results[i].error));
            continue;
        }
        const ChatResponse& r = *results[i].response;
        if (blank(r.text)) {
            spdlog::info("{}: sketch {} was empty", problem.id, i);
            continue;
        }
        Sketch s;
        s.text = r.text;
        s.origin = SketchOrigin::idea_search;
        s.tokens_out = r.tokens_out;
        out[i] = std::move(s);
    }
    return out;
}

std::vector<SolutionCandidate> idea_search(const SearchContext& ctx, const corpus::Problem& problem,
                                           std::size_t n) {
    if (n == 0) throw std::invalid_argument("sample count must be >= 1");
    // stage 1 failures still need their reason on the candidate
    std::vector<ChatRequest> reqs;
    for (std::size_t i = 0; i < n; ++i) reqs.push_back(idea_request(ctx, problem, i));
    auto sketch_results = run_batch(ctx, reqs);

    std::vector<SolutionCandidate> out(n);
    std::vector<ChatRequest> impl_reqs;
    std::vector<std::size_t> owner;
    std::vector<Sketch> sketches(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!sketch_results[i].ok()) {
            out[i] = failed_candidate(problem, Method::idea_search, i, degrade(sketch_results[i].error));
            continue;
        }
        const ChatResponse& r = *sketch_results[i].response;
        if (blank(r.text)) {
            out[i] = failed_candidate(problem, Method::idea_search, i, "empty sketch");
            out[i].tokens_out_total = r.tokens_out;
            continue;
        }
        sketches[i] = Sketch{r.text, SketchOrigin::idea_search, std::nullopt, false, r.tokens_out};
        impl_reqs.push_back(implement_request(ctx, problem, sketches[i], i));
        owner.push_back(i);
    }
    auto impl_results = run_batch(ctx, impl_reqs);
    for (std::size_t r = 0; r < impl_results.size(); ++r) {
        const std::size_t i = owner[r];
        if (impl_results[r].ok()) {
            out[i] = candidate_from_response(problem, Method::idea_search, i, *impl_results[r].response);
        } else {
            out[i] = failed_candidate(problem, Method::idea_search, i, degrade(impl_results[r].error));
        }
        out[i].tokens_out_total += sketches[i].tokens_out;
        out[i].sketch = sketches[i];
    }
    return out;
}

// ─── PlanSearch stages ────────────────────────────────────────

void PlanSearchConfig::validate() const {
    if (max_subset < 1) throw std::invalid_argument("PlanSearch needs S >= 1");
    if (depth != 1 && depth != 2) throw std::invalid_argument("PlanSearch depth L must be 1 or 2");
}

std::vector<Observation> generate_observations(const SearchContext& ctx, const corpus::Problem& problem,
                                               const ObservationCombo* prior, std::size_t sample_index) {
    auto response = ctx.gateway.complete(observation_request(ctx, problem, prior, sample_index));
    return observations_from_response(response, prior ? 2 : 1,
                                      prior ? std::optional<std::size_t>(prior->id) : std::nullopt, problem.id);
}

Sketch observations_to_sketch(const SearchContext& ctx, const corpus::Problem& problem,
                              std::span<const Observation> observations, std::optional<std::size_t> combo_id,
                              std::size_t sample_index) {
    auto response = ctx.gateway.complete(sketch_request(ctx, problem, observations, sample_index));
    if (blank(response.text)) throw SketchEmpty("sketch response was empty");
    return Sketch{response.text, SketchOrigin::plansearch_direct, combo_id, false, response.tokens_out};
}

Sketch criticize_sketch(const SearchContext& ctx, const corpus::Problem& problem, const Sketch& sketch,
                        std::size_t sample_index) {
    return criticized_from_response(ctx.gateway.complete(criticize_request(ctx, problem, sketch, sample_index)),
                                    sketch);
}

SolutionCandidate sketch_to_code(const SearchContext& ctx, const corpus::Problem& problem, const Sketch& sketch,
                                 bool via_pseudocode, std::size_t sample_index, Method method) {
    auto out = sketches_to_code(ctx, problem, {sketch}, {sample_index}, via_pseudocode, method);
    return std::move(out.front());
}

PlanSearchResult plan_search(const SearchContext& ctx, const corpus::Problem& problem, const PlanSearchConfig& cfg) {
    cfg.validate();
    PlanSearchResult result;
    ObservationTree& tree = result.tree;
    tree.problem_id = problem.id;
    tree.depth_limit = cfg.depth;
    tree.max_subset = cfg.max_subset;

    auto add_pool_and_combos = [&](ObservationPool pool, std::optional<std::size_t> parent) {
        const std::size_t pool_id = tree.pools.size();
        const int depth = pool.depth;
        auto combos = enumerate_subsets(pool.observations, cfg.max_subset);
        tree.pools.push_back(std::move(pool));
        for (auto& c : combos) {
            c.id = tree.combos.size();
            c.depth = depth;
            c.pool = pool_id;
            c.parent = parent;
            tree.combos.push_back(std::move(c));
        }
    };

    // depth 1
    {
        ObservationPool root;
        root.depth = 1;
        auto results = run_batch(ctx, {observation_request(ctx, problem, nullptr, 0)});
        if (results[0].ok()) {
            root.observations = observations_from_response(*results[0].response, 1, std::nullopt, problem.id);
            root.tokens_out = results[0].response->tokens_out;
        } else {
            spdlog::warn("{}: first-order observations failed: {}", problem.id, degrade(results[0].error));
        }
        add_pool_and_combos(std::move(root), std::nullopt);
    }

    // depth 2: each depth-1 combo seeds its own pool, combined independently
    if (cfg.depth == 2) {
        const std::size_t first_order = tree.combos.size();
        std::vector<ChatRequest> reqs;
        for (std::size_t id = 0; id < first_order; ++id) {
            reqs.push_back(observation_request(ctx, problem, &tree.combos[id], id));
        }
        auto results = run_batch(ctx, reqs);
        for (std::size_t id = 0; id < first_order; ++id) {
            ObservationPool pool;
            pool.depth = 2;
            pool.source_combo = id;
            if (results[id].ok()) {
                pool.observations = observations_from_response(*results[id].response, 2, id, problem.id);
                pool.tokens_out = results[id].response->tokens_out;
            } else {
                spdlog::warn("{}: derived observations for combo {} failed: {}", problem.id, id,
                             degrade(results[id].error));
            }
            add_pool_and_combos(std::move(pool), id);
        }
    }

    const auto leaves = tree.leaves();

    // leaf combos → direct sketches
    std::vector<ChatRequest> sketch_reqs;
    std::vector<std::vector<Observation>> leaf_observations;
    for (std::size_t j = 0; j < leaves.size(); ++j) {
        leaf_observations.push_back(tree.path_observations(leaves[j]));
        sketch_reqs.push_back(sketch_request(ctx, problem, leaf_observations.back(), j));
    }
    auto sketch_results = run_batch(ctx, sketch_reqs);

    // Per leaf: direct sketch, criticized sketch; each slot holds a sketch or a failure.
    struct Slot {
        std::optional<Sketch> sketch;
        std::optional<std::string> failure;
    };
    std::vector<std::array<Slot, 2>> slots(leaves.size());
    std::vector<ChatRequest> critique_reqs;
    std::vector<std::size_t> critique_owner;
    for (std::size_t j = 0; j < leaves.size(); ++j) {
        if (!sketch_results[j].ok()) {
            std::string why = degrade(sketch_results[j].error);
            slots[j][0].failure = why;
            slots[j][1].failure = why;
            continue;
        }
        const ChatResponse& r = *sketch_results[j].response;
        if (blank(r.text)) {
            spdlog::info("{}: leaf {} produced an empty sketch, skipped (SketchEmpty)", problem.id, j);
            ++result.skipped_leaves;
            continue;
        }
        slots[j][0].sketch = Sketch{r.text, SketchOrigin::plansearch_direct, leaves[j], false, r.tokens_out};
        critique_reqs.push_back(criticize_request(ctx, problem, *slots[j][0].sketch, j));
        critique_owner.push_back(j);
    }
    auto critique_results = run_batch(ctx, critique_reqs);
    for (std::size_t r = 0; r < critique_results.size(); ++r) {
        const std::size_t j = critique_owner[r];
        if (!critique_results[r].ok()) {
            slots[j][1].failure = degrade(critique_results[r].error);
            continue;
        }
        try {
            slots[j][1].sketch = criticized_from_response(*critique_results[r].response, *slots[j][0].sketch);
        } catch (const SketchEmpty&) {
            spdlog::info("{}: leaf {} criticism was empty, keeping the direct sketch only", problem.id, j);
            ++result.dropped_criticisms;
        }
    }

    // sketches → code; candidate ordinal 2j + variant doubles as its sample index
    std::vector<Sketch> sketches;
    std::vector<std::size_t> ordinals;
    for (std::size_t j = 0; j < leaves.size(); ++j) {
        for (std::size_t v = 0; v < 2; ++v) {
            if (slots[j][v].sketch) {
                sketches.push_back(*slots[j][v].sketch);
                ordinals.push_back(2 * j + v);
            }
        }
    }
    auto coded = sketches_to_code(ctx, problem, sketches, ordinals, cfg.via_pseudocode, Method::plansearch);

    std::size_t next_coded = 0;
    for (std::size_t j = 0; j < leaves.size(); ++j) {
        const auto path = tree.path_to(leaves[j]);
        for (std::size_t v = 0; v < 2; ++v) {
            SolutionCandidate c;
            if (slots[j][v].sketch) {
                c = std::move(coded[next_coded++]);
            } else if (slots[j][v].failure) {
                c = failed_candidate(problem, Method::plansearch, 2 * j + v, *slots[j][v].failure);
            } else {
                continue;
            }
            c.combo_path = path;
            result.candidates.push_back(std::move(c));
        }
    }
    return result;
}

// ─── backtranslation / conditioning ───────────────────────────

Sketch backtranslate(const SearchContext& ctx, const corpus::Problem& problem, std::string_view passing_code,
                     std::size_t word_budget, std::size_t sample_index) {
    if (word_budget == 0) throw std::invalid_argument("backtranslation word budget must be >= 1");
    auto response = ctx.gateway.complete(request(
        ctx, "backtranslate_system", "backtranslate_user",
        {{"problem", problem.statement}, {"code", std::string(passing_code)}, {"w", std::to_string(word_budget)}},
        sample_index));
    if (blank(response.text)) throw SketchEmpty("backtranslation response was empty");
    return Sketch{response.text, SketchOrigin::backtranslated, std::nullopt, false, response.tokens_out};
}

SolutionCandidate implement_from_sketch(const SearchContext& ctx, const corpus::Problem& problem,
                                        const Sketch& sketch, std::size_t sample_index, Method method) {
    return sketches_to_code(ctx, problem, {sketch}, {sample_index}, false, method).front();
}

std::vector<SolutionCandidate> implement_many(const SearchContext& ctx, const corpus::Problem& problem,
                                              const Sketch& sketch, std::size_t samples, Method method) {
    std::vector<Sketch> sketches(samples, sketch);
    std::vector<std::size_t> indices(samples);
    for (std::size_t i = 0; i < samples; ++i) indices[i] = i;
    auto out = sketches_to_code(ctx, problem, sketches, indices, false, method);
    // the sketch call is shared by every sample, count it once
    for (std::size_t i = 1; i < out.size(); ++i) out[i].tokens_out_total -= sketch.tokens_out;
    return out;
}

}  // namespace plansearch::search
