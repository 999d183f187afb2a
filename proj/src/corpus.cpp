#include "plansearch/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "plansearch/errors.hpp"

namespace plansearch::corpus {

using nlohmann::json;

const Problem* Dataset::find(std::string_view id) const {
    auto it = std::lower_bound(problems.begin(), problems.end(), id,
                               [](const Problem& p, std::string_view key) { return p.id < key; });
    if (it == problems.end() || it->id != id) return nullptr;
    return &*it;
}

std::optional<Date> parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto number = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
        int value = 0;
        auto first = text.data() + pos;
        auto last = first + len;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc{} || ptr != last) return std::nullopt;
        return value;
    };
    auto y = number(0, 4);
    auto m = number(5, 2);
    auto d = number(8, 2);
    if (!y || !m || !d) return std::nullopt;
    Date date{std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*m)},
              std::chrono::day{static_cast<unsigned>(*d)}};
    if (!date.ok()) return std::nullopt;
    return date;
}

std::string format_date(const Date& d) {
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(d.year()),
                       static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
}

namespace {

std::vector<TestCase> parse_tests(const json& node, const std::string& id, const char* field) {
    std::vector<TestCase> tests;
    if (!node.contains(field)) return tests;
    const json& arr = node.at(field);
    if (!arr.is_array()) throw SchemaViolation(id, fmt::format("'{}' must be an array", field));
    for (const json& t : arr) {
        if (!t.is_object() || !t.contains("input") || !t.contains("output") ||
            !t.at("input").is_string() || !t.at("output").is_string()) {
            throw SchemaViolation(id, fmt::format("'{}' entries need string 'input' and 'output'", field));
        }
        tests.push_back({t.at("input").get<std::string>(), t.at("output").get<std::string>()});
    }
    return tests;
}

Problem parse_problem(const json& node, std::size_t index) {
    if (!node.is_object()) throw SchemaViolation(fmt::format("#{}", index), "problem is not an object");
    if (!node.contains("id") || !node.at("id").is_string() || node.at("id").get<std::string>().empty()) {
        throw SchemaViolation(fmt::format("#{}", index), "missing string field 'id'");
    }
    Problem p;
    p.id = node.at("id").get<std::string>();
    if (!node.contains("statement") || !node.at("statement").is_string()) {
        throw SchemaViolation(p.id, "missing string field 'statement'");
    }
    p.statement = node.at("statement").get<std::string>();
    p.public_tests = parse_tests(node, p.id, "public_tests");
    p.private_tests = parse_tests(node, p.id, "private_tests");
    if (p.test_count() == 0) throw SchemaViolation(p.id, "problem has no tests");

    if (node.contains("release_date") && !node.at("release_date").is_null()) {
        const json& rd = node.at("release_date");
        if (!rd.is_string()) throw SchemaViolation(p.id, "'release_date' must be a YYYY-MM-DD string");
        p.release_date = parse_date(rd.get<std::string>());
        if (!p.release_date) throw SchemaViolation(p.id, "invalid 'release_date' " + rd.get<std::string>());
    }
    if (node.contains("time_limit") && !node.at("time_limit").is_null()) {
        const json& tl = node.at("time_limit");
        if (!tl.is_number() || tl.get<double>() <= 0.0) {
            throw SchemaViolation(p.id, "'time_limit' must be a positive number of seconds");
        }
        p.time_limit_override = tl.get<double>();
    }
    return p;
}

}  // namespace

Dataset parse_dataset(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw MalformedFile(std::string("dataset is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw MalformedFile("dataset root must be a JSON object");
    if (!root.contains("name") || !root.at("name").is_string()) {
        throw SchemaViolation("<dataset>", "missing string field 'name'");
    }
    if (!root.contains("problems") || !root.at("problems").is_array()) {
        throw SchemaViolation("<dataset>", "missing array field 'problems'");
    }

    Dataset ds;
    ds.name = root.at("name").get<std::string>();
    std::unordered_set<std::string> seen;
    std::size_t index = 0;
    for (const json& node : root.at("problems")) {
        Problem p = parse_problem(node, index++);
        if (!seen.insert(p.id).second) throw SchemaViolation(p.id, "duplicate problem id");
        ds.problems.push_back(std::move(p));
    }
    if (ds.problems.empty()) throw SchemaViolation("<dataset>", "dataset has no problems");
    std::sort(ds.problems.begin(), ds.problems.end(),
              [](const Problem& a, const Problem& b) { return a.id < b.id; });
    return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedFile("cannot open dataset file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

json to_json(const Dataset& dataset) {
    auto tests_json = [](const std::vector<TestCase>& tests) {
        json arr = json::array();
        for (const auto& t : tests) arr.push_back({{"input", t.input}, {"output", t.expected_output}});
        return arr;
    };
    json problems = json::array();
    for (const auto& p : dataset.problems) {
        json node = {{"id", p.id},
                     {"statement", p.statement},
                     {"public_tests", tests_json(p.public_tests)},
                     {"private_tests", tests_json(p.private_tests)}};
        if (p.release_date) node["release_date"] = format_date(*p.release_date);
        if (p.time_limit_override) node["time_limit"] = *p.time_limit_override;
        problems.push_back(std::move(node));
    }
    return {{"name", dataset.name}, {"problems", std::move(problems)}};
}

std::string serialize(const Dataset& dataset) { return to_json(dataset).dump(); }

DateFilterResult filter_by_date(const Dataset& dataset, const Date& start, const Date& end) {
    if (end < start) throw std::invalid_argument("date window start is after end");
    DateFilterResult result;
    result.dataset.name = dataset.name;
    for (const auto& p : dataset.problems) {
        if (!p.release_date) {
            ++result.undated_dropped;
            continue;
        }
        if (start <= *p.release_date && *p.release_date <= end) result.dataset.problems.push_back(p);
    }
    if (result.undated_dropped > 0) {
        spdlog::warn("date filter dropped {} undated problem(s) from '{}'", result.undated_dropped,
                     dataset.name);
    }
    if (result.dataset.problems.empty()) {
        throw EmptyResult(fmt::format("no problem in '{}' falls within [{}, {}] ({} undated)",
                                      dataset.name, format_date(start), format_date(end),
                                      result.undated_dropped),
                          result.undated_dropped);
    }
    return result;
}

}  // namespace plansearch::corpus
