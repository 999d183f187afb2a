#pragma once
// Chat-completion gateway: one blocking `complete` and a bounded-parallel
// `complete_batch` over a pluggable Provider, with a content-addressed
// response cache, exponential-backoff retries and a run-wide token ceiling.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace plansearch::llm {

struct SamplingParams {
    double temperature = 0.9;
    double top_p = 0.95;
    int max_tokens = 4096;

    void validate() const;
};

enum class Role { user, assistant };

std::string_view to_string(Role role);

struct Turn {
    Role role = Role::user;
    std::string text;
};

struct ChatRequest {
    std::string model;
    std::string system;
    std::vector<Turn> turns;
    SamplingParams params;
    std::size_t sample_index = 0;  // salts the cache key so repeated draws stay distinct

    // turns nonempty, alternating, starting with the user.
    void validate() const;

    // system + every turn, the text the scripted provider matches against.
    std::string prompt_text() const;
};

// Convenience for the common single-user-turn conversation.
ChatRequest make_request(std::string model, std::string system, std::string user,
                         SamplingParams params, std::size_t sample_index);

struct ChatResponse {
    std::string text;  // may be empty (refusal); never an error by itself
    std::size_t tokens_in = 0;
    std::size_t tokens_out = 0;
    nlohmann::json provider_meta = nlohmann::json::object();
};

nlohmann::json to_json(const ChatResponse& r);
ChatResponse response_from_json(const nlohmann::json& j);

std::string sha256_hex(std::string_view data);

// Hash of (model, system, turns, params). Independent of sample_index.
std::string fingerprint(const ChatRequest& request);

// Hash of the fingerprint content plus sample_index.
std::string cache_key(const ChatRequest& request);

class Provider {
public:
    virtual ~Provider() = default;

    // Throws TransientError for retryable failures, AuthError, ProviderError.
    virtual ChatResponse send(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

// Deterministic test double. Lookup order: exact (fingerprint, sample_index)
// entries, then ordered substring rules, then the fallback text.
//
// Canned texts may use {sample_index} and {fp8} (first 8 hex digits of the
// request fingerprint) placeholders so one rule can produce distinct outputs.
class ScriptedProvider : public Provider {
public:
    struct Rule {
        std::vector<std::string> contains;          // all must occur in prompt_text()
        std::optional<std::size_t> sample_index;    // restrict to one draw
        std::vector<std::string> responses;         // picked by sample_index % size
    };

    ScriptedProvider& add_exact(const std::string& fingerprint, std::size_t sample_index,
                                std::string text);
    ScriptedProvider& add_rule(Rule rule);
    ScriptedProvider& set_fallback(std::string text);

    // { "exact": [{"fingerprint", "sample_index", "response"}],
    //   "rules": [{"contains": [...], "sample_index"?, "response" | "responses": [...]}],
    //   "fallback": str }
    static std::shared_ptr<ScriptedProvider> from_json(const nlohmann::json& script);
    static std::shared_ptr<ScriptedProvider> from_file(const std::filesystem::path& path);

    ChatResponse send(const ChatRequest& request) override;
    std::string name() const override { return "scripted"; }

    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::map<std::pair<std::string, std::size_t>, std::string> exact_;
    std::vector<Rule> rules_;
    std::string fallback_;
    std::atomic<std::size_t> calls_{0};
};

struct HttpProviderOptions {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::seconds timeout{300};
};

// OpenAI-style POST {base_url}/chat/completions.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderOptions options);

    ChatResponse send(const ChatRequest& request) override;
    std::string name() const override { return "http"; }

    static nlohmann::json build_payload(const ChatRequest& request);
    static ChatResponse parse_response(const nlohmann::json& body);

private:
    HttpProviderOptions options_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

// Responses keyed by cache_key(). With a directory, entries persist as
// <dir>/<key[0:2]>/<key>.json and survive across processes.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<ChatResponse> get(const std::string& key) const;
    void put(const std::string& key, const ChatResponse& response);
    std::size_t size() const;

private:
    std::filesystem::path entry_path(const std::string& key) const;

    std::optional<std::filesystem::path> dir_;
    mutable std::shared_mutex mutex_;
    mutable std::unordered_map<std::string, ChatResponse> memory_;
};

struct GatewayOptions {
    int max_attempts = 4;
    std::chrono::milliseconds base_backoff{500};
    double backoff_factor = 2.0;
    std::optional<std::size_t> token_budget;  // provider tokens (in + out) for the whole run
    std::vector<std::string> sanitizer;       // literal substrings removed from every prompt
    std::size_t default_batch_limit = 8;
};

struct GatewayStats {
    std::size_t provider_calls = 0;
    std::size_t cache_hits = 0;
    std::size_t tokens_spent = 0;        // provider-side in+out, counted against the budget
    std::size_t tokens_out_returned = 0; // tokens_out summed over every returned response
    std::size_t peak_in_flight = 0;
};

struct BatchResult {
    std::optional<ChatResponse> response;
    std::exception_ptr error;

    bool ok() const noexcept { return response.has_value(); }
    // Returns the response or rethrows the stored error.
    const ChatResponse& value() const;
};

class Gateway {
public:
    Gateway(std::shared_ptr<Provider> provider, std::shared_ptr<ResponseCache> cache,
            GatewayOptions options = {});

    ChatResponse complete(ChatRequest request);

    // Positionally aligned results; at most `limit` requests in flight.
    std::vector<BatchResult> complete_batch(const std::vector<ChatRequest>& requests,
                                            std::size_t limit);
    std::vector<BatchResult> complete_batch(const std::vector<ChatRequest>& requests) {
        return complete_batch(requests, options_.default_batch_limit);
    }

    GatewayStats stats() const;
    const GatewayOptions& options() const noexcept { return options_; }

    // Applies the sanitizer to system text and every turn.
    ChatRequest sanitize(ChatRequest request) const;

private:
    ChatResponse call_with_retries(const ChatRequest& request);

    std::shared_ptr<Provider> provider_;
    std::shared_ptr<ResponseCache> cache_;
    GatewayOptions options_;

    std::atomic<std::size_t> provider_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
    std::atomic<std::size_t> tokens_spent_{0};
    std::atomic<std::size_t> tokens_out_returned_{0};
    std::atomic<std::size_t> in_flight_{0};
    std::atomic<std::size_t> peak_in_flight_{0};
};

}  // namespace plansearch::llm
