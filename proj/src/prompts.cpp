#include "plansearch/prompts.hpp"

#include <fstream>
#include <sstream>

#include "plansearch/errors.hpp"

namespace plansearch::search {

namespace {

constexpr std::string_view kRepeatedSamplingSystem =
    "You are an expert Python programmer. You will be given a question (problem specification) "
    "and will generate a correct Python program that matches the specification and passes all "
    "tests. You will NOT return anything except for the program inside Markdown codeblocks.";

constexpr std::string_view kCotSystem =
    "You are an expert Python programmer. You will be given a question (problem specification). "
    "First reason about the problem step by step in natural language. Then generate a correct "
    "Python program that matches the specification and passes all tests, and return it inside "
    "Markdown codeblocks at the end of your response.";

constexpr std::string_view kIdeaUser =
    "You will given a competitive programming problem; please output a high-level description "
    "of how to solve the problem in natural language.\n\n"
    "Here is the competitive programming problem: {problem}\n\n"
    "Brainstorm a high-level, natural language solution to the problem above. Note that your "
    "intuition may lead you astray, so come up with simple, creative ideas that go beyond what "
    "you would usually come up with and go beyond your narrow intuition. Brainstorming solutions "
    "that do not seem intuitively correct IS CRUCIAL.";

constexpr std::string_view kImplementSystem =
    "You are an expert Python programmer. You will be given a question (problem specification) "
    "and a natural language solution/tutorial that describes how to solve the problem. You will "
    "generate a correct Python program that matches said specification and tutorial and passes "
    "all tests. You will NOT return anything except for the program inside markdown codeblocks.";

constexpr std::string_view kImplementUser =
    "Problem:\n{problem}\n\nSolution:\n{sketch}";

constexpr std::string_view kObservation1System =
    "You are an expert Python programmer. You will be given an competitive programming question "
    "(problem specification). You will return several useful, non-obvious, and correct "
    "observations about the problem, like hints to solve the problem. You will NOT return any "
    "code. Be as creative as possible, going beyond what you think is intuitively correct.";

constexpr std::string_view kObservation1User =
    "Here is the competitive programming problem:\n\n{problem}\n\n"
    "Return your observations as a numbered list.";

constexpr std::string_view kObservation2System =
    "You are an expert Python programmer. You will be given an competitive programming question "
    "(problem specification) and several correct observations about the problem.\n\n"
    "You will brainstorm several new, useful, and correct observations about the problem, "
    "derived from the given observations. You will NOT return any code. Be as creative as "
    "possible, going beyond what you think is intuitively correct.";

constexpr std::string_view kObservation2User =
    "Here is the competitive programming problem:\n\n{problem}\n\n"
    "Here are the existing observations:\n\n{observations}\n\n"
    "Return your new observations as a numbered list.";

// {observations} expands to the whole observation section, header included,
// and to nothing for the empty combination.
constexpr std::string_view kSketchUser =
    "Here is the competitive programming problem:\n\n{problem}\n\n"
    "{observations}"
    "Use these observations above to brainstorm a natural language solution to the problem "
    "above. Note that your intuition may lead you astray, so come up with simple, creative ideas "
    "that go beyond what you would usually come up with and exceeds your narrow intuition. Quote "
    "relevant parts of the observations EXACTLY before each step of the solution. QUOTING IS "
    "CRUCIAL.";

constexpr std::string_view kSketchObservationsHeader =
    "Here are the intelligent observations to help solve the problem:\n\n";

constexpr std::string_view kCriticizeSystem =
    "You are an expert Python programmer. You will be given a competitive programming problem "
    "and a proposed natural language solution. You will NOT return any code.";

constexpr std::string_view kCriticizeUser =
    "Here is the competitive programming problem:\n\n{problem}\n\n"
    "Here is a proposed solution:\n\n{sketch}\n\n"
    "Suppose this idea is wrong. Give criticisms and feedback on where it fails, then write a "
    "new, corrected natural language solution to the problem that addresses them.";

constexpr std::string_view kPseudocodeSystem =
    "You are an expert Python programmer. You will be given a competitive programming problem "
    "and a natural language solution. You will translate the solution into detailed pseudocode. "
    "You will NOT return any code in a real programming language.";

constexpr std::string_view kPseudocodeUser =
    "Here is the competitive programming problem:\n\n{problem}\n\n"
    "Here is the natural language solution:\n\n{sketch}\n\n"
    "Translate this solution into pseudocode.";

constexpr std::string_view kCodeFromPseudocodeSystem =
    "You are an expert Python programmer. You will be given a question (problem specification) "
    "and pseudocode that describes how to solve the problem. You will generate a correct Python "
    "program that follows the pseudocode and passes all tests. You will NOT return anything "
    "except for the program inside markdown codeblocks.";

constexpr std::string_view kCodeFromPseudocodeUser =
    "Problem:\n{problem}\n\nPseudocode:\n{pseudocode}";

constexpr std::string_view kBacktranslateSystem =
    "You are an expert Python programmer. You will be given an algorithmic question (problem "
    "specification). You will return a high-level, natural language solution to the question, "
    "like an editorial. You will NOT return any code. Be as creative as possible, going beyond "
    "what you think is intuitively correct.";

constexpr std::string_view kBacktranslateUser =
    "Problem:\n{problem}\n\nHere is a correct solution:\n```python\n{code}\n```\n\n"
    "Explain the idea behind this solution in {w} words.";

constexpr std::string_view kJudgeSystem =
    "You are an expert Python programmer. You will be given a competitive programming problem "
    "and two pieces of code which are attempts to solve the problem. For your convenience, you "
    "will also be given the idea for each code, summarized in natural language. You will be "
    "asked to answer whether the ideas behind the code are the same. You must ONLY output 'Yes.' "
    "or 'No.'";

constexpr std::string_view kJudgeUser =
    "Problem:\n{problem}\n\n"
    "Code 1:\n```python\n{code_a}\n```\n\nIdea 1:\n{idea_a}\n\n"
    "Code 2:\n```python\n{code_b}\n```\n\nIdea 2:\n{idea_b}\n\n"
    "Are the ideas behind the two codes the same?";

constexpr std::string_view kJudgeReprompt = "You must ONLY output 'Yes.' or 'No.'";

}  // namespace

const std::vector<std::string>& PromptTemplates::names() {
    static const std::vector<std::string> kNames = {
        "repeated_sampling_system", "repeated_sampling_user", "cot_system", "cot_user",
        "idea_system", "idea_user", "implement_system", "implement_user",
        "observation1_system", "observation1_user", "observation2_system", "observation2_user",
        "sketch_system", "sketch_user", "sketch_observations_header",
        "criticize_system", "criticize_user", "pseudocode_system", "pseudocode_user",
        "code_from_pseudocode_system", "code_from_pseudocode_user",
        "backtranslate_system", "backtranslate_user", "judge_system", "judge_user",
        "judge_reprompt"};
    return kNames;
}

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    auto& m = t.templates_;
    m["repeated_sampling_system"] = kRepeatedSamplingSystem;
    m["repeated_sampling_user"] = "{problem}";
    m["cot_system"] = kCotSystem;
    m["cot_user"] = "{problem}";
    m["idea_system"] = "";
    m["idea_user"] = kIdeaUser;
    m["implement_system"] = kImplementSystem;
    m["implement_user"] = kImplementUser;
    m["observation1_system"] = kObservation1System;
    m["observation1_user"] = kObservation1User;
    m["observation2_system"] = kObservation2System;
    m["observation2_user"] = kObservation2User;
    m["sketch_system"] = "";
    m["sketch_user"] = kSketchUser;
    m["sketch_observations_header"] = kSketchObservationsHeader;
    m["criticize_system"] = kCriticizeSystem;
    m["criticize_user"] = kCriticizeUser;
    m["pseudocode_system"] = kPseudocodeSystem;
    m["pseudocode_user"] = kPseudocodeUser;
    m["code_from_pseudocode_system"] = kCodeFromPseudocodeSystem;
    m["code_from_pseudocode_user"] = kCodeFromPseudocodeUser;
    m["backtranslate_system"] = kBacktranslateSystem;
    m["backtranslate_user"] = kBacktranslateUser;
    m["judge_system"] = kJudgeSystem;
    m["judge_user"] = kJudgeUser;
    m["judge_reprompt"] = kJudgeReprompt;
    return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
    PromptTemplates t = defaults();
    if (!std::filesystem::is_directory(dir)) throw ConfigError("prompt directory not found: " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        const std::string name = entry.path().stem().string();
        if (t.templates_.find(name) == t.templates_.end()) {
            throw ConfigError("unknown prompt template '" + name + "' in " + dir.string());
        }
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        t.templates_[name] = buf.str();
    }
    return t;
}

const std::string& PromptTemplates::get(std::string_view name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw std::out_of_range("no prompt template named " + std::string(name));
    return it->second;
}

void PromptTemplates::set(std::string_view name, std::string text) {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw std::out_of_range("no prompt template named " + std::string(name));
    it->second = std::move(text);
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

}  // namespace plansearch::search
