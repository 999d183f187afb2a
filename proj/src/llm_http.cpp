#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include <fmt/format.h>

#include "plansearch/errors.hpp"
#include "plansearch/llm.hpp"

namespace plansearch::llm {

using nlohmann::json;

HttpProvider::HttpProvider(HttpProviderOptions options) : options_(std::move(options)) {
    const std::string& url = options_.base_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_port_ = url;
    } else {
        scheme_host_port_ = url.substr(0, path_start);
        path_prefix_ = url.substr(path_start);
    }
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

json HttpProvider::build_payload(const ChatRequest& request) {
    json messages = json::array();
    if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
    for (const auto& t : request.turns) {
        messages.push_back({{"role", to_string(t.role)}, {"content", t.text}});
    }
    return {{"model", request.model},
            {"messages", std::move(messages)},
            {"temperature", request.params.temperature},
            {"top_p", request.params.top_p},
            {"max_tokens", request.params.max_tokens}};
}

ChatResponse HttpProvider::parse_response(const json& body) {
    ChatResponse r;
    try {
        const json& choice = body.at("choices").at(0);
        const json& content = choice.at("message").at("content");
        r.text = content.is_null() ? std::string{} : content.get<std::string>();
        if (body.contains("usage") && body.at("usage").is_object()) {
            r.tokens_in = body.at("usage").value("prompt_tokens", std::size_t{0});
            r.tokens_out = body.at("usage").value("completion_tokens", std::size_t{0});
        }
        r.provider_meta = {{"provider", "http"},
                           {"finish_reason", choice.value("finish_reason", json(nullptr))},
                           {"id", body.value("id", json(nullptr))}};
    } catch (const json::exception& e) {
        throw ProviderError(std::string("unexpected chat-completions payload: ") + e.what());
    }
    return r;
}

ChatResponse HttpProvider::send(const ChatRequest& request) {
    const char* token = std::getenv(options_.api_key_env.c_str());
    if (token == nullptr || *token == '\0') {
        throw AuthError("environment variable " + options_.api_key_env + " is not set");
    }

    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(30);
    client.set_read_timeout(options_.timeout.count());
    client.set_write_timeout(60);
    client.set_bearer_token_auth(token);

    const std::string body = build_payload(request).dump();
    auto res = client.Post(path_prefix_ + "/chat/completions", body, "application/json");
    if (!res) {
        throw TransientError("HTTP request failed: " + httplib::to_string(res.error()));
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
        throw AuthError(fmt::format("provider rejected credentials (HTTP {})", status));
    }
    if (status == 408 || status == 409 || status == 429 || status >= 500) {
        throw TransientError(fmt::format("provider returned HTTP {}", status));
    }
    if (status != 200) {
        throw ProviderError(fmt::format("provider returned HTTP {}: {}", status, res->body.substr(0, 500)));
    }
    json parsed;
    try {
        parsed = json::parse(res->body);
    } catch (const json::parse_error&) {
        throw TransientError("provider returned a truncated or non-JSON body");
    }
    return parse_response(parsed);
}

}  // namespace plansearch::llm
