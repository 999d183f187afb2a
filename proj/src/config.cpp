#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "plansearch/errors.hpp"
#include "plansearch/orchestrator.hpp"

namespace plansearch::orchestrator {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Inputs = std::vector<std::string>;

std::string join(const Inputs& inputs) {
    std::string out;
    for (const auto& s : inputs) {
        if (!out.empty()) out += ' ';
        out += s;
    }
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
}

std::string scalar(const std::string& key, const Inputs& inputs) {
    std::string v = join(inputs);
    if (v.empty()) throw ConfigError("config key '" + key + "' has no value");
    return v;
}

std::size_t to_size(const std::string& key, const Inputs& inputs) {
    const std::string v = scalar(key, inputs);
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError(fmt::format("config key '{}': '{}' is not a non-negative integer", key, v));
    }
    return out;
}

double to_double(const std::string& key, const Inputs& inputs) {
    const std::string v = scalar(key, inputs);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError(fmt::format("config key '{}': '{}' is not a number", key, v));
    }
    return out;
}

bool to_bool(const std::string& key, const Inputs& inputs) {
    const std::string v = lower(scalar(key, inputs));
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ConfigError(fmt::format("config key '{}': '{}' is not a boolean", key, v));
}

// Byte counts accept a K/M/G suffix (binary multiples).
std::size_t to_bytes(const std::string& key, const Inputs& inputs) {
    std::string v = scalar(key, inputs);
    std::size_t mult = 1;
    const char last = static_cast<char>(std::toupper(static_cast<unsigned char>(v.back())));
    if (last == 'K' || last == 'M' || last == 'G') {
        mult = last == 'K' ? (std::size_t{1} << 10) : last == 'M' ? (std::size_t{1} << 20) : (std::size_t{1} << 30);
        v.pop_back();
    }
    return to_size(key, {v}) * mult;
}

fs::path to_path(const std::string& key, const Inputs& inputs, const fs::path& base) {
    fs::path p = scalar(key, inputs);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

Inputs to_list(const Inputs& inputs) {
    Inputs out;
    for (const auto& s : inputs) {
        if (!s.empty()) out.push_back(s);
    }
    return out;
}

std::optional<std::size_t> to_optional_size(const std::string& key, const Inputs& inputs) {
    const std::string v = lower(join(inputs));
    if (v.empty() || v == "none" || v == "0") return std::nullopt;
    return to_size(key, inputs);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const Inputs&, const fs::path&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"dataset", [](auto& c, auto& k, auto& v, auto& b) { c.dataset = to_path(k, v, b); }},
        {"date_start", [](auto& c, auto& k, auto& v, auto&) { c.date_start = scalar(k, v); }},
        {"date_end", [](auto& c, auto& k, auto& v, auto&) { c.date_end = scalar(k, v); }},
        {"method",
         [](auto& c, auto& k, auto& v, auto&) {
             try {
                 c.method = search::method_from_string(scalar(k, v));
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(e.what());
             }
         }},
        {"model", [](auto& c, auto& k, auto& v, auto&) { c.model = scalar(k, v); }},
        {"judge_model", [](auto& c, auto& k, auto& v, auto&) { c.judge_model = scalar(k, v); }},
        {"provider", [](auto& c, auto& k, auto& v, auto&) { c.provider = lower(scalar(k, v)); }},
        {"mock_script", [](auto& c, auto& k, auto& v, auto& b) { c.mock_script = to_path(k, v, b); }},
        {"base_url", [](auto& c, auto& k, auto& v, auto&) { c.base_url = scalar(k, v); }},
        {"api_key_env", [](auto& c, auto& k, auto& v, auto&) { c.api_key_env = scalar(k, v); }},
        {"temperature", [](auto& c, auto& k, auto& v, auto&) { c.params.temperature = to_double(k, v); }},
        {"top_p", [](auto& c, auto& k, auto& v, auto&) { c.params.top_p = to_double(k, v); }},
        {"max_tokens", [](auto& c, auto& k, auto& v, auto&) { c.params.max_tokens = static_cast<int>(to_size(k, v)); }},
        {"n", [](auto& c, auto& k, auto& v, auto&) { c.n = to_size(k, v); }},
        {"S", [](auto& c, auto& k, auto& v, auto&) { c.plansearch.max_subset = to_size(k, v); }},
        {"L", [](auto& c, auto& k, auto& v, auto&) { c.plansearch.depth = static_cast<int>(to_size(k, v)); }},
        {"via_pseudocode", [](auto& c, auto& k, auto& v, auto&) { c.plansearch.via_pseudocode = to_bool(k, v); }},
        {"prompts_dir", [](auto& c, auto& k, auto& v, auto& b) { c.prompts_dir = to_path(k, v, b); }},
        {"sanitizer", [](auto& c, auto&, auto& v, auto&) { c.sanitizer = to_list(v); }},
        {"token_budget", [](auto& c, auto& k, auto& v, auto&) { c.token_budget = to_optional_size(k, v); }},
        {"max_attempts", [](auto& c, auto& k, auto& v, auto&) { c.max_attempts = static_cast<int>(to_size(k, v)); }},
        {"backoff_ms", [](auto& c, auto& k, auto& v, auto&) { c.backoff_ms = to_size(k, v); }},
        {"executor", [](auto& c, auto& k, auto& v, auto&) { c.executor = lower(scalar(k, v)); }},
        {"shim_command", [](auto& c, auto&, auto& v, auto&) { c.shim_command = to_list(v); }},
        {"canned_rules", [](auto& c, auto& k, auto& v, auto& b) { c.canned_rules = to_path(k, v, b); }},
        {"wall_time", [](auto& c, auto& k, auto& v, auto&) { c.limits.wall_time = to_double(k, v); }},
        {"memory", [](auto& c, auto& k, auto& v, auto&) { c.limits.memory = to_bytes(k, v); }},
        {"output_cap", [](auto& c, auto& k, auto& v, auto&) { c.limits.output_cap = to_bytes(k, v); }},
        {"detail", [](auto& c, auto& k, auto& v, auto&) { c.detail = to_bool(k, v); }},
        {"problem_concurrency", [](auto& c, auto& k, auto& v, auto&) { c.problem_concurrency = to_size(k, v); }},
        {"request_concurrency", [](auto& c, auto& k, auto& v, auto&) { c.request_concurrency = to_size(k, v); }},
        {"exec_workers", [](auto& c, auto& k, auto& v, auto&) { c.exec_workers = static_cast<int>(to_size(k, v)); }},
        {"k_max", [](auto& c, auto& k, auto& v, auto&) { c.k_max = to_size(k, v); }},
        {"filtered_k_max", [](auto& c, auto& k, auto& v, auto&) { c.filtered_k_max = to_size(k, v); }},
        {"filtering", [](auto& c, auto& k, auto& v, auto&) { c.filtering = to_bool(k, v); }},
        {"seed", [](auto& c, auto& k, auto& v, auto&) { c.seed = to_size(k, v); }},
        {"conditioning_sketches", [](auto& c, auto& k, auto& v, auto&) { c.conditioning_sketches = to_size(k, v); }},
        {"conditioning_samples", [](auto& c, auto& k, auto& v, auto&) { c.conditioning_samples = to_size(k, v); }},
        {"backtranslation_pool",
         [](auto& c, auto& k, auto& v, auto& b) { c.backtranslation_pool = to_path(k, v, b); }},
        {"backtranslation_words",
         [](auto& c, auto& k, auto& v, auto&) {
             c.backtranslation_words.clear();
             for (const auto& s : to_list(v)) c.backtranslation_words.push_back(to_size(k, {s}));
         }},
        {"backtranslation_samples",
         [](auto& c, auto& k, auto& v, auto&) { c.backtranslation_samples = to_size(k, v); }},
        {"backtranslation_pool_limit",
         [](auto& c, auto& k, auto& v, auto&) { c.backtranslation_pool_limit = to_size(k, v); }},
        {"diversity", [](auto& c, auto& k, auto& v, auto&) { c.diversity = to_bool(k, v); }},
        {"diversity_words", [](auto& c, auto& k, auto& v, auto&) { c.diversity_words = to_size(k, v); }},
        {"diversity_subsample", [](auto& c, auto& k, auto& v, auto&) { c.diversity_subsample = to_size(k, v); }},
        {"cache_dir", [](auto& c, auto& k, auto& v, auto& b) { c.cache_dir = to_path(k, v, b); }},
    };
    return table;
}

void apply_item(ExperimentConfig& config, const std::string& key, const Inputs& inputs, const fs::path& base) {
    const auto& table = setters();
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(config, key, inputs, base);
}

template <typename T>
std::optional<T> opt(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

json opt_json(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }
json opt_json(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

}  // namespace

void ExperimentConfig::validate() const {
    if (dataset.empty()) throw ConfigError("config: dataset is required");
    for (const auto* d : {&date_start, &date_end}) {
        if (*d && !corpus::parse_date(**d)) throw ConfigError("config: bad date '" + **d + "' (want YYYY-MM-DD)");
    }
    try {
        params.validate();
        plansearch.validate();
        limits.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (model.empty() || judge_model.empty()) throw ConfigError("config: model names must be nonempty");
    if (provider != "scripted" && provider != "http") throw ConfigError("config: provider must be scripted or http");
    if (provider == "scripted" && !mock_script) throw ConfigError("config: the scripted provider needs mock_script");
    if (executor != "shim" && executor != "canned") throw ConfigError("config: executor must be shim or canned");
    if (executor == "canned" && !canned_rules) throw ConfigError("config: the canned executor needs canned_rules");
    if (executor == "shim" && shim_command.empty()) throw ConfigError("config: shim_command is empty");
    if (n == 0) throw ConfigError("config: n must be >= 1");
    if (k_max == 0 || filtered_k_max == 0) throw ConfigError("config: k grids must reach at least k = 1");
    if (problem_concurrency == 0 || request_concurrency == 0) throw ConfigError("config: concurrency must be >= 1");
    if (max_attempts < 1) throw ConfigError("config: max_attempts must be >= 1");
    if (conditioning_sketches == 0 || conditioning_samples == 0) {
        throw ConfigError("config: conditioning sketch and sample counts must be >= 1");
    }
    if (method == search::Method::backtranslation) {
        if (!backtranslation_pool) throw ConfigError("config: backtranslation needs backtranslation_pool");
        if (backtranslation_words.empty()) throw ConfigError("config: backtranslation_words is empty");
        if (backtranslation_samples == 0 || backtranslation_pool_limit == 0) {
            throw ConfigError("config: backtranslation sample counts must be >= 1");
        }
    }
    for (auto w : backtranslation_words) {
        if (w == 0) throw ConfigError("config: backtranslation word budgets must be >= 1");
    }
    if (diversity_words == 0) throw ConfigError("config: diversity_words must be >= 1");
    if (diversity_subsample < 2) throw ConfigError("config: diversity_subsample must be >= 2");
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["dataset"] = c.dataset.string();
    j["date_start"] = opt_json(c.date_start);
    j["date_end"] = opt_json(c.date_end);
    j["method"] = std::string(search::to_string(c.method));
    j["model"] = c.model;
    j["judge_model"] = c.judge_model;
    j["provider"] = c.provider;
    j["mock_script"] = opt_json(c.mock_script);
    j["base_url"] = c.base_url;
    j["api_key_env"] = c.api_key_env;
    j["temperature"] = c.params.temperature;
    j["top_p"] = c.params.top_p;
    j["max_tokens"] = c.params.max_tokens;
    j["n"] = c.n;
    j["S"] = c.plansearch.max_subset;
    j["L"] = c.plansearch.depth;
    j["via_pseudocode"] = c.plansearch.via_pseudocode;
    j["prompts_dir"] = opt_json(c.prompts_dir);
    j["sanitizer"] = c.sanitizer;
    j["token_budget"] = c.token_budget ? json(*c.token_budget) : json(nullptr);
    j["max_attempts"] = c.max_attempts;
    j["backoff_ms"] = c.backoff_ms;
    j["executor"] = c.executor;
    j["shim_command"] = c.shim_command;
    j["canned_rules"] = opt_json(c.canned_rules);
    j["wall_time"] = c.limits.wall_time;
    j["memory"] = c.limits.memory;
    j["output_cap"] = c.limits.output_cap;
    j["detail"] = c.detail;
    j["problem_concurrency"] = c.problem_concurrency;
    j["request_concurrency"] = c.request_concurrency;
    j["exec_workers"] = c.exec_workers;
    j["k_max"] = c.k_max;
    j["filtered_k_max"] = c.filtered_k_max;
    j["filtering"] = c.filtering;
    j["seed"] = c.seed;
    j["conditioning_sketches"] = c.conditioning_sketches;
    j["conditioning_samples"] = c.conditioning_samples;
    j["backtranslation_pool"] = opt_json(c.backtranslation_pool);
    j["backtranslation_words"] = c.backtranslation_words;
    j["backtranslation_samples"] = c.backtranslation_samples;
    j["backtranslation_pool_limit"] = c.backtranslation_pool_limit;
    j["diversity"] = c.diversity;
    j["diversity_words"] = c.diversity_words;
    j["diversity_subsample"] = c.diversity_subsample;
    j["cache_dir"] = opt_json(c.cache_dir);
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    try {
        c.dataset = j.at("dataset").get<std::string>();
        c.date_start = opt<std::string>(j, "date_start");
        c.date_end = opt<std::string>(j, "date_end");
        c.method = search::method_from_string(j.at("method").get<std::string>());
        c.model = j.at("model").get<std::string>();
        c.judge_model = j.at("judge_model").get<std::string>();
        c.provider = j.at("provider").get<std::string>();
        if (auto p = opt<std::string>(j, "mock_script")) c.mock_script = *p;
        c.base_url = j.at("base_url").get<std::string>();
        c.api_key_env = j.at("api_key_env").get<std::string>();
        c.params.temperature = j.at("temperature").get<double>();
        c.params.top_p = j.at("top_p").get<double>();
        c.params.max_tokens = j.at("max_tokens").get<int>();
        c.n = j.at("n").get<std::size_t>();
        c.plansearch.max_subset = j.at("S").get<std::size_t>();
        c.plansearch.depth = j.at("L").get<int>();
        c.plansearch.via_pseudocode = j.at("via_pseudocode").get<bool>();
        if (auto p = opt<std::string>(j, "prompts_dir")) c.prompts_dir = *p;
        c.sanitizer = j.at("sanitizer").get<std::vector<std::string>>();
        c.token_budget = opt<std::size_t>(j, "token_budget");
        c.max_attempts = j.at("max_attempts").get<int>();
        c.backoff_ms = j.at("backoff_ms").get<std::size_t>();
        c.executor = j.at("executor").get<std::string>();
        c.shim_command = j.at("shim_command").get<std::vector<std::string>>();
        if (auto p = opt<std::string>(j, "canned_rules")) c.canned_rules = *p;
        c.limits.wall_time = j.at("wall_time").get<double>();
        c.limits.memory = j.at("memory").get<std::size_t>();
        c.limits.output_cap = j.at("output_cap").get<std::size_t>();
        c.detail = j.at("detail").get<bool>();
        c.problem_concurrency = j.at("problem_concurrency").get<std::size_t>();
        c.request_concurrency = j.at("request_concurrency").get<std::size_t>();
        c.exec_workers = j.at("exec_workers").get<int>();
        c.k_max = j.at("k_max").get<std::size_t>();
        c.filtered_k_max = j.at("filtered_k_max").get<std::size_t>();
        c.filtering = j.at("filtering").get<bool>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.conditioning_sketches = j.at("conditioning_sketches").get<std::size_t>();
        c.conditioning_samples = j.at("conditioning_samples").get<std::size_t>();
        if (auto p = opt<std::string>(j, "backtranslation_pool")) c.backtranslation_pool = *p;
        c.backtranslation_words = j.at("backtranslation_words").get<std::vector<std::size_t>>();
        c.backtranslation_samples = j.at("backtranslation_samples").get<std::size_t>();
        c.backtranslation_pool_limit = j.at("backtranslation_pool_limit").get<std::size_t>();
        c.diversity = j.at("diversity").get<bool>();
        c.diversity_words = j.at("diversity_words").get<std::size_t>();
        c.diversity_subsample = j.at("diversity_subsample").get<std::size_t>();
        if (auto p = opt<std::string>(j, "cache_dir")) c.cache_dir = *p;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config snapshot: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config snapshot: ") + e.what());
    }
    return c;
}

ExperimentConfig parse_config(std::istream& in, const fs::path& base_dir, const Overrides& overrides) {
    ExperimentConfig config;
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& item : items) {
        // CLI11 emits "++" / "--" markers around sections; sections are cosmetic here.
        if (item.name == "++" || item.name == "--") continue;
        apply_item(config, item.name, item.inputs, base_dir);
    }
    for (const auto& [key, value] : overrides) apply_setting(config, key, value, fs::current_path());
    config.validate();
    return config;
}

ExperimentConfig load_config(const fs::path& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse_config(in, fs::absolute(path).parent_path(), overrides);
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value,
                   const fs::path& base_dir) {
    Inputs inputs;
    std::string token;
    for (char ch : value) {
        if (ch == ',' || std::isspace(static_cast<unsigned char>(ch))) {
            if (!token.empty()) inputs.push_back(std::move(token));
            token.clear();
        } else {
            token.push_back(ch);
        }
    }
    if (!token.empty()) inputs.push_back(std::move(token));
    apply_item(config, key, inputs, base_dir);
}

std::shared_ptr<llm::Provider> make_provider(const ExperimentConfig& config) {
    if (config.provider == "scripted") {
        if (!config.mock_script) throw ConfigError("the scripted provider needs mock_script");
        return llm::ScriptedProvider::from_file(*config.mock_script);
    }
    llm::HttpProviderOptions opts;
    opts.base_url = config.base_url;
    opts.api_key_env = config.api_key_env;
    return std::make_shared<llm::HttpProvider>(opts);
}

std::shared_ptr<exec::ExecutionBackend> make_backend(const ExperimentConfig& config) {
    if (config.executor == "canned") {
        if (!config.canned_rules) throw ConfigError("the canned executor needs canned_rules");
        return exec::CannedBackend::from_file(*config.canned_rules);
    }
    return std::make_shared<exec::ShimBackend>(config.shim_command);
}

corpus::Dataset load_problems(const ExperimentConfig& config) {
    corpus::Dataset ds = corpus::load_dataset(config.dataset);
    if (!config.date_start && !config.date_end) return ds;
    using namespace std::chrono;
    const corpus::Date start =
        config.date_start ? *corpus::parse_date(*config.date_start) : year{1} / January / day{1};
    const corpus::Date end = config.date_end ? *corpus::parse_date(*config.date_end) : year{9999} / December / day{31};
    auto filtered = corpus::filter_by_date(ds, start, end);
    if (filtered.undated_dropped > 0) {
        spdlog::warn("date window dropped {} undated problem(s)", filtered.undated_dropped);
    }
    return std::move(filtered.dataset);
}

}  // namespace plansearch::orchestrator
