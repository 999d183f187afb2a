#pragma once
// Benchmark problem sets in the canonical single-file JSON format.
//
//   { "name": str,
//     "problems": [ { "id": str, "statement": str,
//                     "release_date": "YYYY-MM-DD"?,      (optional)
//                     "time_limit": seconds?,             (optional)
//                     "public_tests":  [{"input": str, "output": str}],
//                     "private_tests": [{"input": str, "output": str}] } ] }
//
// Problems are stdin/stdout programs; every test feeds `input` on standard
// input and compares standard output against `output`.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace plansearch::corpus {

using Date = std::chrono::year_month_day;

struct TestCase {
    std::string input;
    std::string expected_output;
};

struct Problem {
    std::string id;
    std::string statement;
    std::vector<TestCase> public_tests;
    std::vector<TestCase> private_tests;
    std::optional<Date> release_date;
    std::optional<double> time_limit_override;  // seconds

    std::size_t test_count() const { return public_tests.size() + private_tests.size(); }
};

struct Dataset {
    std::string name;
    std::vector<Problem> problems;  // sorted by id

    const Problem* find(std::string_view id) const;
};

// Strict YYYY-MM-DD. Returns nullopt for anything else, including 2024-02-30.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& d);

Dataset parse_dataset(std::string_view json_text);
Dataset load_dataset(const std::filesystem::path& path);

nlohmann::json to_json(const Dataset& dataset);
std::string serialize(const Dataset& dataset);

struct DateFilterResult {
    Dataset dataset;
    std::size_t undated_dropped = 0;
};

// Keeps problems with release_date in [start, end], both ends inclusive.
// Undated problems are dropped and counted. Throws EmptyResult when nothing
// survives and std::invalid_argument when start > end.
DateFilterResult filter_by_date(const Dataset& dataset, const Date& start, const Date& end);

}  // namespace plansearch::corpus
