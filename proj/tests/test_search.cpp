#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "plansearch/corpus.hpp"
#include "plansearch/errors.hpp"
#include "plansearch/search.hpp"

using namespace plansearch;
using namespace plansearch::search;
using nlohmann::json;

namespace {

corpus::Problem toy_problem() { return corpus::parse_dataset(fixtures::toy_dataset(1).dump()).problems.at(0); }

struct Harness {
    explicit Harness(const json& script)
        : provider(llm::ScriptedProvider::from_json(script)),
          gateway(provider, nullptr),
          prompts(PromptTemplates::defaults()),
          ctx{gateway, prompts, "scripted-model", {}, 4} {}

    std::shared_ptr<llm::ScriptedProvider> provider;
    llm::Gateway gateway;
    PromptTemplates prompts;
    SearchContext ctx;
};

std::size_t choose2(std::size_t n) { return n * (n - 1) / 2; }

}  // namespace

TEST(ExtractCode, TakesLastCompleteBlock) {
    EXPECT_EQ(extract_code("text\n```python\nprint(1)\n```\nmore\n```\nprint(2)\n```"), "print(2)");
    EXPECT_EQ(extract_code("```py\na\nb\n```"), "a\nb");
    EXPECT_EQ(extract_code("```python\nx = 1\n```\n```python\nunterminated"), "x = 1");
    EXPECT_FALSE(extract_code("no block at all"));
    EXPECT_FALSE(extract_code("```python\n   \n```"));
    EXPECT_FALSE(extract_code("```python\nnever closed"));
}

TEST(ObservationList, NumberedBulletedAndParagraphs) {
    EXPECT_EQ(parse_observation_list("1. first\n2) second\n   continued\n3. third").size(), 3u);
    EXPECT_EQ(parse_observation_list("1. first\n2) second\n   continued")[1], "second continued");
    EXPECT_EQ(parse_observation_list("- a\n* b").size(), 2u);
    EXPECT_EQ(parse_observation_list("para one\nstill one\n\npara two").size(), 2u);
    EXPECT_TRUE(parse_observation_list("just a single block of prose\nwith two lines").empty());
    EXPECT_TRUE(parse_observation_list("").empty());
}

TEST(Subsets, LexicographicWithEmptyFirst) {
    auto s = enumerate_subset_indices(3, 2);
    std::vector<std::vector<std::size_t>> want = {{}, {0}, {0, 1}, {0, 2}, {1}, {1, 2}, {2}};
    EXPECT_EQ(s, want);
    for (std::size_t n = 0; n <= 8; ++n) {
        EXPECT_EQ(enumerate_subset_indices(n, 2).size(), 1 + n + choose2(n));
        EXPECT_EQ(enumerate_subset_indices(n, 0).size(), 1u);
        EXPECT_EQ(enumerate_subset_indices(n, n).size(), std::size_t{1} << n);
    }
}

TEST(Methods, NamesRoundTrip) {
    for (auto m : {Method::repeated_sampling, Method::cot, Method::idea_search, Method::plansearch,
                   Method::backtranslation, Method::conditioning}) {
        EXPECT_EQ(method_from_string(to_string(m)), m);
    }
    EXPECT_THROW(method_from_string("beam"), std::invalid_argument);
}

TEST(PromptTemplates, RenderLeavesUnknownBraces) {
    EXPECT_EQ(render("a {x} {y} {}", {{"x", "1"}}), "a 1 {y} {}");
    fixtures::TempDir dir;
    fixtures::write_text(dir / "judge_reprompt.txt", "Answer yes or no.");
    EXPECT_EQ(PromptTemplates::load(dir.path()).get("judge_reprompt"), "Answer yes or no.");
    fixtures::write_text(dir / "bogus.txt", "x");
    EXPECT_THROW(PromptTemplates::load(dir.path()), ConfigError);
    for (const auto& name : PromptTemplates::names()) EXPECT_NO_THROW(PromptTemplates::defaults().get(name));
}

TEST(Baselines, RepeatedSamplingDrawsDistinctIndices) {
    Harness h(fixtures::rs_script());
    auto cands = repeated_sampling(h.ctx, toy_problem(), 5);
    ASSERT_EQ(cands.size(), 5u);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        EXPECT_EQ(cands[i].sample_index, i);
        EXPECT_TRUE(cands[i].format_ok);
        EXPECT_EQ(cands[i].method, Method::repeated_sampling);
    }
    EXPECT_NE(cands[0].code->find("CORRECT 0"), std::string::npos);
    EXPECT_NE(cands[2].code->find("PUBLIC_ONLY 2"), std::string::npos);
}

TEST(Baselines, BlocklessResponsesAreFormatFailures) {
    Harness h(fixtures::blockless_script());
    for (const auto& c : repeated_sampling(h.ctx, toy_problem(), 4)) {
        EXPECT_FALSE(c.format_ok);
        EXPECT_FALSE(c.code);
    }
}

TEST(Baselines, IdeaSearchCarriesTheSketch) {
    Harness h(fixtures::idea_script());
    auto cands = idea_search(h.ctx, toy_problem(), 4);
    ASSERT_EQ(cands.size(), 4u);
    for (const auto& c : cands) {
        ASSERT_TRUE(c.sketch);
        EXPECT_EQ(c.sketch->origin, SketchOrigin::idea_search);
        EXPECT_TRUE(c.format_ok);
        EXPECT_GT(c.tokens_out_total, 0u);
    }
}

TEST(PlanSearch, DepthOneCandidateCount) {
    for (std::size_t n1 : {0, 2, 4, 6}) {
        Harness h(fixtures::plansearch_script(n1));
        auto r = plan_search(h.ctx, toy_problem(), {.max_subset = 2, .depth = 1});
        EXPECT_EQ(r.candidates.size(), 2 * (1 + n1 + choose2(n1))) << "n1=" << n1;
        EXPECT_EQ(r.tree.leaves().size(), 1 + n1 + choose2(n1));
        EXPECT_EQ(r.skipped_leaves, 0u);
    }
}

TEST(PlanSearch, DepthTwoCandidateCount) {
    Harness h(fixtures::plansearch_script(2, 2));
    auto r = plan_search(h.ctx, toy_problem(), {.max_subset = 2, .depth = 2});
    EXPECT_EQ(r.candidates.size(), 32u);
    EXPECT_EQ(r.tree.leaves().size(), 16u);
    std::size_t direct = 0;
    std::size_t criticized = 0;
    for (const auto& c : r.candidates) {
        ASSERT_TRUE(c.sketch);
        direct += c.sketch->origin == SketchOrigin::plansearch_direct;
        criticized += c.sketch->origin == SketchOrigin::plansearch_criticized;
        EXPECT_EQ(c.combo_path.size(), 2u);
        EXPECT_TRUE(c.pseudocode);
        EXPECT_TRUE(c.format_ok);
    }
    EXPECT_EQ(direct, 16u);
    EXPECT_EQ(criticized, 16u);
}

TEST(PlanSearch, TreeRoundTripsThroughJson) {
    Harness h(fixtures::plansearch_script(3, 1));
    auto r = plan_search(h.ctx, toy_problem(), {.max_subset = 2, .depth = 2});
    auto back = tree_from_json(to_json(r.tree));
    EXPECT_EQ(to_json(back).dump(), to_json(r.tree).dump());
    for (auto leaf : r.tree.leaves()) {
        auto path = r.tree.path_to(leaf);
        ASSERT_EQ(path.size(), 2u);
        EXPECT_EQ(path[0].depth, 1);
        EXPECT_EQ(path[1].depth, 2);
    }
    auto cand = candidate_from_json(to_json(r.candidates.front()));
    EXPECT_EQ(to_json(cand).dump(), to_json(r.candidates.front()).dump());
}

TEST(PlanSearch, EmptySketchesAreSkipped) {
    json script = fixtures::plansearch_script(2);
    // Sketch stage refuses; every leaf is skipped.
    script["rules"][3]["response"] = "";
    Harness h(script);
    auto r = plan_search(h.ctx, toy_problem(), {.max_subset = 2, .depth = 1});
    EXPECT_TRUE(r.candidates.empty());
    EXPECT_EQ(r.skipped_leaves, 4u);
}

TEST(PlanSearch, RejectsBadConfig) {
    EXPECT_THROW((PlanSearchConfig{.max_subset = 2, .depth = 3}.validate()), std::invalid_argument);
    EXPECT_THROW((PlanSearchConfig{.max_subset = 2, .depth = 0}.validate()), std::invalid_argument);
}

TEST(PlanSearch, RunsAreDeterministic) {
    auto once = [] {
        Harness h(fixtures::plansearch_script(3, 2));
        json out = json::array();
        for (const auto& c : plan_search(h.ctx, toy_problem()).candidates) out.push_back(to_json(c));
        return out.dump();
    };
    EXPECT_EQ(once(), once());
}

TEST(Backtranslation, ProducesBacktranslatedSketch) {
    Harness h(fixtures::idea_script());
    auto s = backtranslate(h.ctx, toy_problem(), "print('CORRECT')", 25);
    EXPECT_EQ(s.origin, SketchOrigin::backtranslated);
    EXPECT_THROW(backtranslate(h.ctx, toy_problem(), "x", 0), std::invalid_argument);
    auto impls = implement_many(h.ctx, toy_problem(), s, 4, Method::backtranslation);
    ASSERT_EQ(impls.size(), 4u);
    for (std::size_t i = 0; i < impls.size(); ++i) {
        EXPECT_EQ(impls[i].method, Method::backtranslation);
        EXPECT_EQ(impls[i].sample_index, i);
        ASSERT_TRUE(impls[i].code);
        // The script alternates a passing and a failing implementation.
        EXPECT_NE(impls[i].code->find(i % 2 ? "WRONG" : "CORRECT"), std::string::npos);
    }
}

TEST(Sketches, RefusalsBecomeNullopt) {
    json script = fixtures::idea_script();
    script["rules"][2]["response"] = "";
    Harness h(script);
    auto sketches = generate_sketches(h.ctx, toy_problem(), 3);
    ASSERT_EQ(sketches.size(), 3u);
    for (const auto& s : sketches) EXPECT_FALSE(s);
}
