#pragma once
// Shared test fixtures: temp directories, a toy problem set, canned
// execution rules and scripted-provider scripts for each strategy.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

namespace fixtures {

using nlohmann::json;
namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "plansearch-test-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline fs::path write_json(const fs::path& path, const json& j) {
    write_text(path, j.dump(2));
    return path;
}

// Problem i sums two numbers; inputs are unique across the whole set so a
// single stdin -> stdout map can judge every test.
inline json toy_dataset(std::size_t problems = 3) {
    json ps = json::array();
    for (std::size_t i = 1; i <= problems; ++i) {
        const std::string id = "p" + std::to_string(i);
        auto t = [&](int a, int b) {
            return json{{"input", std::to_string(a) + " " + std::to_string(b) + "\n"},
                        {"output", std::to_string(a + b) + "\n"}};
        };
        const int base = static_cast<int>(i) * 100;
        ps.push_back({{"id", id},
                      {"statement", "Problem " + id + ": read two integers and print their sum."},
                      {"release_date", "2024-0" + std::to_string(5 + (i % 4)) + "-1" + std::to_string(i % 10)},
                      {"public_tests", json::array({t(base + 1, 2)})},
                      {"private_tests", json::array({t(base + 3, 4), t(base + 5, 6)})}});
    }
    return {{"name", "toy"}, {"problems", ps}};
}

// Programs containing CORRECT pass everything, PUBLIC_ONLY passes only the
// public tests, anything else prints a wrong answer.
inline json canned_rules(const json& dataset) {
    json all = json::object();
    json pub = json::object();
    for (const auto& p : dataset.at("problems")) {
        for (const auto& t : p.at("public_tests")) {
            all[t.at("input").get<std::string>()] = t.at("output");
            pub[t.at("input").get<std::string>()] = t.at("output");
        }
        for (const auto& t : p.at("private_tests")) all[t.at("input").get<std::string>()] = t.at("output");
    }
    return {{"rules", json::array({{{"source_contains", "CORRECT"}, {"stdout_map", all}},
                                   {{"source_contains", "PUBLIC_ONLY"}, {"stdout_map", pub}, {"stdout", "-1\n"}},
                                   {{"source_contains", "CRASH"}, {"status", "runtime_error"}, {"stderr", "boom"}}})},
            {"default", {{"stdout", "-1\n"}}}};
}

inline std::string code_block(const std::string& body) { return "```python\n" + body + "\n```"; }

// Repeated sampling: draws cycle CORRECT, WRONG, PUBLIC_ONLY, WRONG, WRONG.
inline json rs_script() {
    return {{"rules", json::array({{{"contains", "inside Markdown codeblocks"},
                                    {"responses", json::array({code_block("print('CORRECT {sample_index}')"),
                                                               code_block("print('WRONG {sample_index}')"),
                                                               code_block("print('PUBLIC_ONLY {sample_index}')"),
                                                               code_block("print('WRONG {sample_index}')"),
                                                               code_block("print('WRONG {sample_index}')")})}}})},
            {"fallback", code_block("print('WRONG fallback')")}};
}

inline std::string numbered(std::size_t count, const std::string& stem) {
    std::string out;
    for (std::size_t i = 1; i <= count; ++i) out += std::to_string(i) + ". " + stem + " " + std::to_string(i) + " ({fp8})\n";
    return out;
}

// PlanSearch: n1 first-order observations, n2 derived ones per expansion;
// every stage answers so each leaf yields a direct and a criticized sketch.
inline json plansearch_script(std::size_t n1, std::size_t n2 = 2, const std::string& code = "print('CORRECT')") {
    json rules = json::array();
    rules.push_back({{"contains", "follows the pseudocode"}, {"response", code_block(code + "  # {fp8}")}});
    rules.push_back({{"contains", "Translate this solution into pseudocode"}, {"response", "read a, b\nprint a + b ({fp8})"}});
    rules.push_back({{"contains", "Suppose this idea is wrong"}, {"response", "Revised idea ({fp8}): add the numbers."}});
    rules.push_back({{"contains", "QUOTING IS CRUCIAL"}, {"response", "Sketch ({fp8}): add the numbers."}});
    rules.push_back({{"contains", "Return your new observations"},
                     {"response", n2 ? numbered(n2, "Derived observation") : std::string("Nothing more to add.")}});
    rules.push_back({{"contains", "Return your observations as a numbered list"},
                     {"response", n1 ? numbered(n1, "Observation") : std::string("Nothing to add.")}});
    return {{"rules", rules}, {"fallback", ""}};
}

// IdeaSearch / conditioning / backtranslation: sketch then implementation.
inline json idea_script() {
    json rules = json::array();
    rules.push_back({{"contains", "Explain the idea behind this solution"}, {"response", "Backtranslated idea ({fp8})."}});
    rules.push_back({{"contains", "natural language solution/tutorial"},
                     {"responses", json::array({code_block("print('CORRECT {fp8}')"),
                                                code_block("print('WRONG {fp8}')")})}});
    rules.push_back({{"contains", "Brainstorm a high-level"}, {"response", "Idea {sample_index}: add them."}});
    rules.push_back({{"contains", "inside Markdown codeblocks"},
                     {"responses", json::array({code_block("print('CORRECT {sample_index}')"),
                                                code_block("print('WRONG {sample_index}')")})}});
    rules.push_back({{"contains", "Are the ideas behind the two codes the same?"}, {"response", "No."}});
    return {{"rules", rules}, {"fallback", ""}};
}

// A model that never emits a code block.
inline json blockless_script() { return {{"rules", json::array()}, {"fallback", "The answer is to add the numbers."}}; }

// Minimal run configuration; extra lines are appended verbatim.
inline std::string config_text(const fs::path& dataset, const fs::path& script, const fs::path& rules,
                               const std::string& extra = "") {
    return "# test configuration\n"
           "dataset = " + dataset.string() + "\n"
           "method = repeated_sampling\n"
           "model = scripted-model\n"
           "provider = scripted\n"
           "mock_script = " + script.string() + "\n"
           "executor = canned\n"
           "canned_rules = " + rules.string() + "\n"
           "n = 5\n"
           "k_max = 10\n"
           "filtered_k_max = 5\n"
           "seed = 7\n"
           "backoff_ms = 1\n" + extra;
}

}  // namespace fixtures
