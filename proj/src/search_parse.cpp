#include <algorithm>
#include <regex>
#include <stdexcept>

#include "plansearch/search.hpp"

namespace plansearch::search {

using nlohmann::json;

std::string_view to_string(Method m) {
    switch (m) {
        case Method::repeated_sampling: return "repeated_sampling";
        case Method::cot: return "cot";
        case Method::idea_search: return "idea_search";
        case Method::plansearch: return "plansearch";
        case Method::backtranslation: return "backtranslation";
        case Method::conditioning: return "conditioning";
    }
    return "unknown";
}

Method method_from_string(std::string_view s) {
    for (Method m : {Method::repeated_sampling, Method::cot, Method::idea_search, Method::plansearch,
                     Method::backtranslation, Method::conditioning}) {
        if (to_string(m) == s) return m;
    }
    throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

std::string_view to_string(SketchOrigin o) {
    switch (o) {
        case SketchOrigin::idea_search: return "idea_search";
        case SketchOrigin::plansearch_direct: return "plansearch_direct";
        case SketchOrigin::plansearch_criticized: return "plansearch_criticized";
        case SketchOrigin::backtranslated: return "backtranslated";
    }
    return "unknown";
}

SketchOrigin sketch_origin_from_string(std::string_view s) {
    for (SketchOrigin o : {SketchOrigin::idea_search, SketchOrigin::plansearch_direct,
                           SketchOrigin::plansearch_criticized, SketchOrigin::backtranslated}) {
        if (to_string(o) == s) return o;
    }
    throw std::invalid_argument("unknown sketch origin '" + std::string(s) + "'");
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

std::string_view trim(std::string_view s) {
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool is_closing_fence(std::string_view line) {
    line = trim(line);
    return line.size() >= 3 && std::all_of(line.begin(), line.end(), [](char c) { return c == '`'; });
}

bool is_opening_fence(std::string_view line) { return trim(line).substr(0, 3) == "```"; }

}  // namespace

std::optional<std::string> extract_code(std::string_view response_text) {
    const auto lines = split_lines(response_text);
    std::optional<std::pair<std::size_t, std::size_t>> last_block;  // [first, last) content lines
    std::optional<std::size_t> open;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!open) {
            if (is_opening_fence(lines[i])) open = i;
        } else if (is_closing_fence(lines[i])) {
            last_block = {*open + 1, i};
            open.reset();
        }
    }
    if (!last_block) return std::nullopt;
    std::string code;
    for (std::size_t i = last_block->first; i < last_block->second; ++i) {
        if (i > last_block->first) code += '\n';
        code += lines[i];
    }
    if (trim(code).empty()) return std::nullopt;
    return code;
}

std::vector<std::string> parse_observation_list(std::string_view text) {
    static const std::regex numbered(R"(^\s*(?:\*\*)?\d+[.):](?:\*\*)?\s+(.*\S)\s*$)");
    static const std::regex bulleted(R"(^\s*[-*+•]\s+(.*\S)\s*$)");

    const auto lines = split_lines(text);
    auto parse_items = [&](const std::regex& marker) {
        std::vector<std::string> items;
        bool blank_since_item = false;
        for (auto raw : lines) {
            std::string line(raw);
            std::smatch m;
            if (std::regex_match(line, m, marker)) {
                items.push_back(m[1].str());
                blank_since_item = false;
            } else if (trim(line).empty()) {
                blank_since_item = true;
            } else if (!items.empty() && !blank_since_item) {
                items.back() += ' ';
                items.back() += trim(line);
            }
        }
        return items;
    };

    if (auto items = parse_items(numbered); !items.empty()) return items;
    if (auto items = parse_items(bulleted); !items.empty()) return items;

    std::vector<std::string> paragraphs;
    std::string current;
    for (auto line : lines) {
        if (trim(line).empty()) {
            if (!current.empty()) paragraphs.push_back(std::move(current));
            current.clear();
            continue;
        }
        if (!current.empty()) current += ' ';
        current += trim(line);
    }
    if (!current.empty()) paragraphs.push_back(std::move(current));
    if (paragraphs.size() < 2) return {};
    return paragraphs;
}

std::vector<std::vector<std::size_t>> enumerate_subset_indices(std::size_t n, std::size_t max_size) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> current;
    // depth-first over the next admissible index gives lexicographic order
    auto visit = [&](auto&& self, std::size_t from) -> void {
        out.push_back(current);
        if (current.size() == max_size) return;
        for (std::size_t i = from; i < n; ++i) {
            current.push_back(i);
            self(self, i + 1);
            current.pop_back();
        }
    };
    visit(visit, 0);
    return out;
}

std::vector<ObservationCombo> enumerate_subsets(std::span<const Observation> observations,
                                                std::size_t max_size) {
    std::vector<ObservationCombo> combos;
    for (auto& members : enumerate_subset_indices(observations.size(), max_size)) {
        ObservationCombo c;
        c.id = combos.size();
        c.depth = observations.empty() ? 1 : observations.front().depth;
        for (auto idx : members) c.observations.push_back(observations[idx]);
        c.members = std::move(members);
        combos.push_back(std::move(c));
    }
    return combos;
}

// ─── tree ─────────────────────────────────────────────────────

std::vector<std::size_t> ObservationTree::leaves() const {
    std::vector<std::size_t> out;
    for (const auto& c : combos) {
        if (c.depth == depth_limit) out.push_back(c.id);
    }
    return out;
}

std::vector<ObservationCombo> ObservationTree::path_to(std::size_t combo) const {
    std::vector<ObservationCombo> path;
    std::optional<std::size_t> cur = combo;
    while (cur) {
        path.push_back(combos.at(*cur));
        cur = combos.at(*cur).parent;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<Observation> ObservationTree::path_observations(std::size_t combo) const {
    std::vector<Observation> out;
    for (const auto& c : path_to(combo)) {
        out.insert(out.end(), c.observations.begin(), c.observations.end());
    }
    return out;
}

std::size_t ObservationTree::tokens_out_total() const {
    std::size_t total = 0;
    for (const auto& p : pools) total += p.tokens_out;
    return total;
}

// ─── JSON ─────────────────────────────────────────────────────

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

}  // namespace

json to_json(const Observation& o) {
    return {{"text", o.text}, {"depth", o.depth}, {"parent_combo", optional_json(o.parent_combo)}};
}

Observation observation_from_json(const json& j) {
    return {j.at("text").get<std::string>(), j.at("depth").get<int>(),
            optional_from<std::size_t>(j, "parent_combo")};
}

json to_json(const ObservationCombo& c) {
    json obs = json::array();
    for (const auto& o : c.observations) obs.push_back(to_json(o));
    return {{"id", c.id},        {"depth", c.depth},         {"pool", c.pool},
            {"members", c.members}, {"observations", obs}, {"parent", optional_json(c.parent)}};
}

ObservationCombo combo_from_json(const json& j) {
    ObservationCombo c;
    c.id = j.at("id").get<std::size_t>();
    c.depth = j.at("depth").get<int>();
    c.pool = j.at("pool").get<std::size_t>();
    c.members = j.at("members").get<std::vector<std::size_t>>();
    for (const auto& o : j.at("observations")) c.observations.push_back(observation_from_json(o));
    c.parent = optional_from<std::size_t>(j, "parent");
    return c;
}

json to_json(const ObservationTree& t) {
    json pools = json::array();
    for (const auto& p : t.pools) {
        json obs = json::array();
        for (const auto& o : p.observations) obs.push_back(to_json(o));
        pools.push_back({{"depth", p.depth},
                         {"source_combo", optional_json(p.source_combo)},
                         {"observations", obs},
                         {"tokens_out", p.tokens_out}});
    }
    json combos = json::array();
    for (const auto& c : t.combos) combos.push_back(to_json(c));
    return {{"problem_id", t.problem_id}, {"depth_limit", t.depth_limit}, {"max_subset", t.max_subset},
            {"pools", pools},             {"combos", combos}};
}

ObservationTree tree_from_json(const json& j) {
    ObservationTree t;
    t.problem_id = j.at("problem_id").get<std::string>();
    t.depth_limit = j.at("depth_limit").get<int>();
    t.max_subset = j.at("max_subset").get<std::size_t>();
    for (const auto& p : j.at("pools")) {
        ObservationPool pool;
        pool.depth = p.at("depth").get<int>();
        pool.source_combo = optional_from<std::size_t>(p, "source_combo");
        for (const auto& o : p.at("observations")) pool.observations.push_back(observation_from_json(o));
        pool.tokens_out = p.at("tokens_out").get<std::size_t>();
        t.pools.push_back(std::move(pool));
    }
    for (const auto& c : j.at("combos")) t.combos.push_back(combo_from_json(c));
    return t;
}

json to_json(const Sketch& s) {
    return {{"text", s.text},
            {"origin", to_string(s.origin)},
            {"source_combo", optional_json(s.source_combo)},
            {"duplicate_of_source", s.duplicate_of_source},
            {"tokens_out", s.tokens_out}};
}

Sketch sketch_from_json(const json& j) {
    Sketch s;
    s.text = j.at("text").get<std::string>();
    s.origin = sketch_origin_from_string(j.at("origin").get<std::string>());
    s.source_combo = optional_from<std::size_t>(j, "source_combo");
    s.duplicate_of_source = j.value("duplicate_of_source", false);
    s.tokens_out = j.value("tokens_out", std::size_t{0});
    return s;
}

json to_json(const SolutionCandidate& c) {
    json path = json::array();
    for (const auto& combo : c.combo_path) path.push_back(to_json(combo));
    return {{"problem_id", c.problem_id},
            {"method", to_string(c.method)},
            {"sample_index", c.sample_index},
            {"format_ok", c.format_ok},
            {"code", optional_json(c.code)},
            {"sketch", c.sketch ? to_json(*c.sketch) : json(nullptr)},
            {"pseudocode", optional_json(c.pseudocode)},
            {"combo_path", path},
            {"tokens_out_total", c.tokens_out_total},
            {"error", optional_json(c.error)}};
}

SolutionCandidate candidate_from_json(const json& j) {
    SolutionCandidate c;
    c.problem_id = j.at("problem_id").get<std::string>();
    c.method = method_from_string(j.at("method").get<std::string>());
    c.sample_index = j.at("sample_index").get<std::size_t>();
    c.format_ok = j.at("format_ok").get<bool>();
    c.code = optional_from<std::string>(j, "code");
    if (j.contains("sketch") && !j.at("sketch").is_null()) c.sketch = sketch_from_json(j.at("sketch"));
    c.pseudocode = optional_from<std::string>(j, "pseudocode");
    for (const auto& combo : j.value("combo_path", json::array())) c.combo_path.push_back(combo_from_json(combo));
    c.tokens_out_total = j.at("tokens_out_total").get<std::size_t>();
    c.error = optional_from<std::string>(j, "error");
    return c;
}

}  // namespace plansearch::search
