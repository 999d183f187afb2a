#include "plansearch/llm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "plansearch/errors.hpp"

namespace plansearch::llm {

using nlohmann::json;

void SamplingParams::validate() const {
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
    if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
}

std::string_view to_string(Role role) { return role == Role::user ? "user" : "assistant"; }

void ChatRequest::validate() const {
    if (model.empty()) throw std::invalid_argument("request has no model");
    if (turns.empty()) throw std::invalid_argument("request has no turns");
    for (std::size_t i = 0; i < turns.size(); ++i) {
        Role expected = (i % 2 == 0) ? Role::user : Role::assistant;
        if (turns[i].role != expected) {
            throw std::invalid_argument("turn roles must alternate starting with user");
        }
    }
    params.validate();
}

std::string ChatRequest::prompt_text() const {
    std::string out = system;
    for (const auto& t : turns) {
        out += '\n';
        out += t.text;
    }
    return out;
}

ChatRequest make_request(std::string model, std::string system, std::string user,
                         SamplingParams params, std::size_t sample_index) {
    ChatRequest r;
    r.model = std::move(model);
    r.system = std::move(system);
    r.turns.push_back({Role::user, std::move(user)});
    r.params = params;
    r.sample_index = sample_index;
    return r;
}

json to_json(const ChatResponse& r) {
    return {{"text", r.text},
            {"tokens_in", r.tokens_in},
            {"tokens_out", r.tokens_out},
            {"provider_meta", r.provider_meta}};
}

ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    r.text = j.at("text").get<std::string>();
    r.tokens_in = j.value("tokens_in", std::size_t{0});
    r.tokens_out = j.value("tokens_out", std::size_t{0});
    r.provider_meta = j.value("provider_meta", json::object());
    return r;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

namespace {

json canonical_content(const ChatRequest& r) {
    json turns = json::array();
    for (const auto& t : r.turns) turns.push_back({to_string(t.role), t.text});
    return {{"model", r.model},
            {"system", r.system},
            {"turns", std::move(turns)},
            {"temperature", r.params.temperature},
            {"top_p", r.params.top_p},
            {"max_tokens", r.params.max_tokens}};
}

std::size_t count_words(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    if (from.empty()) return;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

}  // namespace

std::string fingerprint(const ChatRequest& request) {
    return sha256_hex(canonical_content(request).dump());
}

std::string cache_key(const ChatRequest& request) {
    json content = canonical_content(request);
    content["sample_index"] = request.sample_index;
    return sha256_hex(content.dump());
}

// ─── ScriptedProvider ─────────────────────────────────────────

ScriptedProvider& ScriptedProvider::add_exact(const std::string& fp, std::size_t sample_index,
                                              std::string text) {
    exact_[{fp, sample_index}] = std::move(text);
    return *this;
}

ScriptedProvider& ScriptedProvider::add_rule(Rule rule) {
    if (rule.responses.empty()) throw std::invalid_argument("scripted rule has no responses");
    rules_.push_back(std::move(rule));
    return *this;
}

ScriptedProvider& ScriptedProvider::set_fallback(std::string text) {
    fallback_ = std::move(text);
    return *this;
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_json(const json& script) {
    auto provider = std::make_shared<ScriptedProvider>();
    try {
        for (const auto& e : script.value("exact", json::array())) {
            provider->add_exact(e.at("fingerprint").get<std::string>(),
                                e.value("sample_index", std::size_t{0}),
                                e.at("response").get<std::string>());
        }
        for (const auto& r : script.value("rules", json::array())) {
            Rule rule;
            if (r.contains("contains")) {
                const json& c = r.at("contains");
                if (c.is_string()) {
                    rule.contains.push_back(c.get<std::string>());
                } else {
                    rule.contains = c.get<std::vector<std::string>>();
                }
            }
            if (r.contains("sample_index")) rule.sample_index = r.at("sample_index").get<std::size_t>();
            if (r.contains("responses")) {
                rule.responses = r.at("responses").get<std::vector<std::string>>();
            } else {
                rule.responses.push_back(r.at("response").get<std::string>());
            }
            provider->add_rule(std::move(rule));
        }
        provider->set_fallback(script.value("fallback", std::string{}));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid mock script: ") + e.what());
    }
    return provider;
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock script " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ConfigError("mock script " + path.string() + " is not valid JSON: " + e.what());
    }
}

ChatResponse ScriptedProvider::send(const ChatRequest& request) {
    ++calls_;
    const std::string fp = fingerprint(request);
    const std::string prompt = request.prompt_text();

    std::string text = fallback_;
    if (auto it = exact_.find({fp, request.sample_index}); it != exact_.end()) {
        text = it->second;
    } else {
        for (const auto& rule : rules_) {
            if (rule.sample_index && *rule.sample_index != request.sample_index) continue;
            bool all = std::all_of(rule.contains.begin(), rule.contains.end(),
                                   [&](const std::string& s) { return prompt.find(s) != std::string::npos; });
            if (!all) continue;
            text = rule.responses[request.sample_index % rule.responses.size()];
            break;
        }
    }
    replace_all(text, "{sample_index}", std::to_string(request.sample_index));
    replace_all(text, "{fp8}", fp.substr(0, 8));

    ChatResponse r;
    r.tokens_in = count_words(prompt);
    r.tokens_out = count_words(text);
    r.text = std::move(text);
    r.provider_meta = {{"provider", "scripted"}};
    return r;
}

// ─── ResponseCache ────────────────────────────────────────────

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
}

std::filesystem::path ResponseCache::entry_path(const std::string& key) const {
    return *dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<ChatResponse> ResponseCache::get(const std::string& key) const {
    {
        std::shared_lock lock(mutex_);
        if (auto it = memory_.find(key); it != memory_.end()) return it->second;
    }
    if (!dir_) return std::nullopt;
    std::ifstream in(entry_path(key), std::ios::binary);
    if (!in) return std::nullopt;
    ChatResponse r;
    try {
        r = response_from_json(json::parse(in));
    } catch (const json::exception& e) {
        spdlog::warn("ignoring unreadable cache entry {}: {}", key, e.what());
        return std::nullopt;
    }
    std::unique_lock lock(mutex_);
    memory_.emplace(key, r);
    return r;
}

void ResponseCache::put(const std::string& key, const ChatResponse& response) {
    std::unique_lock lock(mutex_);
    memory_[key] = response;
    if (!dir_) return;
    auto path = entry_path(key);
    std::filesystem::create_directories(path.parent_path());
    // rename is atomic, readers never see a half-written entry
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << to_json(response).dump();
    }
    std::filesystem::rename(tmp, path);
}

std::size_t ResponseCache::size() const {
    std::shared_lock lock(mutex_);
    return memory_.size();
}

// ─── Gateway ──────────────────────────────────────────────────

const ChatResponse& BatchResult::value() const {
    if (error) std::rethrow_exception(error);
    return *response;
}

Gateway::Gateway(std::shared_ptr<Provider> provider, std::shared_ptr<ResponseCache> cache,
                 GatewayOptions options)
    : provider_(std::move(provider)),
      cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
      options_(std::move(options)) {
    if (!provider_) throw std::invalid_argument("gateway needs a provider");
    if (options_.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
}

ChatRequest Gateway::sanitize(ChatRequest request) const {
    for (const auto& word : options_.sanitizer) {
        replace_all(request.system, word, "");
        for (auto& t : request.turns) replace_all(t.text, word, "");
    }
    return request;
}

ChatResponse Gateway::complete(ChatRequest request) {
    request = sanitize(std::move(request));
    request.validate();
    const std::string key = cache_key(request);
    if (auto hit = cache_->get(key)) {
        ++cache_hits_;
        tokens_out_returned_ += hit->tokens_out;
        return *hit;
    }
    ChatResponse response = call_with_retries(request);
    cache_->put(key, response);
    tokens_out_returned_ += response.tokens_out;
    return response;
}

ChatResponse Gateway::call_with_retries(const ChatRequest& request) {
    auto delay = options_.base_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        if (options_.token_budget && tokens_spent_.load() >= *options_.token_budget) {
            throw BudgetExceeded(fmt::format("token budget of {} exhausted ({} spent)",
                                             *options_.token_budget, tokens_spent_.load()));
        }
        std::size_t now = ++in_flight_;
        std::size_t peak = peak_in_flight_.load();
        while (now > peak && !peak_in_flight_.compare_exchange_weak(peak, now)) {
        }
        try {
            ++provider_calls_;
            ChatResponse r = provider_->send(request);
            --in_flight_;
            tokens_spent_ += r.tokens_in + r.tokens_out;
            return r;
        } catch (const TransientError& e) {
            --in_flight_;
            last_error = e.what();
            spdlog::debug("transient provider failure (attempt {}/{}): {}", attempt,
                          options_.max_attempts, last_error);
        } catch (...) {
            --in_flight_;
            throw;
        }
        if (attempt < options_.max_attempts) {
            std::this_thread::sleep_for(delay);
            delay = std::chrono::milliseconds(
                static_cast<long long>(std::llround(delay.count() * options_.backoff_factor)));
        }
    }
    throw ProviderExhausted(fmt::format("provider failed {} time(s); last error: {}",
                                        options_.max_attempts, last_error));
}

std::vector<BatchResult> Gateway::complete_batch(const std::vector<ChatRequest>& requests,
                                                 std::size_t limit) {
    if (limit == 0) throw std::invalid_argument("batch limit must be >= 1");
    std::vector<BatchResult> results(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) {
            try {
                results[i].response = complete(requests[i]);
            } catch (...) {
                results[i].error = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min(limit, requests.size());
    if (workers <= 1) {
        worker();
        return results;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    pool.clear();  // joins
    return results;
}

GatewayStats Gateway::stats() const {
    return {provider_calls_.load(), cache_hits_.load(), tokens_spent_.load(),
            tokens_out_returned_.load(), peak_in_flight_.load()};
}

}  // namespace plansearch::llm
