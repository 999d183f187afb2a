#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "plansearch/corpus.hpp"
#include "plansearch/errors.hpp"

using namespace plansearch;
using namespace std::chrono;
using nlohmann::json;

namespace {

json one_problem(const std::string& id) {
    return {{"id", id},
            {"statement", "print hello"},
            {"public_tests", json::array({{{"input", ""}, {"output", "hello\n"}}})},
            {"private_tests", json::array()}};
}

}  // namespace

TEST(Corpus, ParsesToyDatasetSortedById) {
    json ds = fixtures::toy_dataset(3);
    std::swap(ds["problems"][0], ds["problems"][2]);
    auto parsed = corpus::parse_dataset(ds.dump());
    ASSERT_EQ(parsed.problems.size(), 3u);
    EXPECT_EQ(parsed.name, "toy");
    EXPECT_EQ(parsed.problems[0].id, "p1");
    EXPECT_EQ(parsed.problems[2].id, "p3");
    EXPECT_EQ(parsed.problems[0].public_tests.size(), 1u);
    EXPECT_EQ(parsed.problems[0].private_tests.size(), 2u);
    EXPECT_EQ(parsed.problems[0].test_count(), 3u);
    ASSERT_TRUE(parsed.problems[0].release_date);
    ASSERT_NE(parsed.find("p2"), nullptr);
    EXPECT_EQ(parsed.find("nope"), nullptr);
}

TEST(Corpus, RoundTripsThroughSerialize) {
    auto a = corpus::parse_dataset(fixtures::toy_dataset(2).dump());
    auto b = corpus::parse_dataset(corpus::serialize(a));
    EXPECT_EQ(corpus::serialize(a), corpus::serialize(b));
}

TEST(Corpus, RejectsMalformedJson) {
    EXPECT_THROW(corpus::parse_dataset("{not json"), MalformedFile);
}

TEST(Corpus, SchemaViolationsNameTheProblem) {
    json ds = {{"name", "x"}, {"problems", json::array({one_problem("a"), one_problem("a")})}};
    try {
        corpus::parse_dataset(ds.dump());
        FAIL() << "duplicate id accepted";
    } catch (const SchemaViolation& e) {
        EXPECT_EQ(e.problem_id(), "a");
    }

    json no_tests = one_problem("b");
    no_tests["public_tests"] = json::array();
    EXPECT_THROW(corpus::parse_dataset(json{{"name", "x"}, {"problems", json::array({no_tests})}}.dump()),
                 SchemaViolation);

    json missing = one_problem("c");
    missing.erase("statement");
    EXPECT_THROW(corpus::parse_dataset(json{{"name", "x"}, {"problems", json::array({missing})}}.dump()),
                 SchemaViolation);

    json bad_date = one_problem("d");
    bad_date["release_date"] = "2024-02-30";
    EXPECT_THROW(corpus::parse_dataset(json{{"name", "x"}, {"problems", json::array({bad_date})}}.dump()),
                 SchemaViolation);
}

TEST(Corpus, OptionalTimeLimitIsKept) {
    json p = one_problem("t");
    p["time_limit"] = 2.5;
    auto ds = corpus::parse_dataset(json{{"name", "x"}, {"problems", json::array({p})}}.dump());
    ASSERT_TRUE(ds.problems[0].time_limit_override);
    EXPECT_DOUBLE_EQ(*ds.problems[0].time_limit_override, 2.5);
}

TEST(Corpus, StrictDates) {
    EXPECT_TRUE(corpus::parse_date("2024-05-01"));
    EXPECT_FALSE(corpus::parse_date("2024-5-1"));
    EXPECT_FALSE(corpus::parse_date("2024-13-01"));
    EXPECT_FALSE(corpus::parse_date("2023-02-29"));
    EXPECT_TRUE(corpus::parse_date("2024-02-29"));
    EXPECT_FALSE(corpus::parse_date("2024-05-01x"));
    EXPECT_EQ(corpus::format_date(year{2024} / May / day{1}), "2024-05-01");
}

TEST(Corpus, DateWindowIsInclusiveAndCountsUndated) {
    json ds = {{"name", "x"}, {"problems", json::array()}};
    const char* dates[] = {"2024-05-01", "2024-06-15", "2024-09-01", nullptr};
    for (int i = 0; i < 4; ++i) {
        json p = one_problem("q" + std::to_string(i));
        if (dates[i]) p["release_date"] = dates[i];
        ds["problems"].push_back(p);
    }
    auto parsed = corpus::parse_dataset(ds.dump());
    auto r = corpus::filter_by_date(parsed, year{2024} / May / day{1}, year{2024} / September / day{1});
    EXPECT_EQ(r.dataset.problems.size(), 3u);
    EXPECT_EQ(r.undated_dropped, 1u);

    auto narrow = corpus::filter_by_date(parsed, year{2024} / June / day{15}, year{2024} / June / day{15});
    ASSERT_EQ(narrow.dataset.problems.size(), 1u);
    EXPECT_EQ(narrow.dataset.problems[0].id, "q1");

    EXPECT_THROW(corpus::filter_by_date(parsed, year{2025} / January / day{1}, year{2025} / February / day{1}),
                 EmptyResult);
    EXPECT_THROW(corpus::filter_by_date(parsed, year{2025} / January / day{1}, year{2024} / January / day{1}),
                 std::invalid_argument);
}

TEST(Corpus, LoadsFromDisk) {
    fixtures::TempDir dir;
    auto path = fixtures::write_json(dir / "ds.json", fixtures::toy_dataset(2));
    EXPECT_EQ(corpus::load_dataset(path).problems.size(), 2u);
    EXPECT_THROW(corpus::load_dataset(dir / "missing.json"), MalformedFile);
}
