#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "fixtures.hpp"
#include "plansearch/errors.hpp"
#include "plansearch/llm.hpp"

using namespace plansearch;
using namespace plansearch::llm;
using nlohmann::json;

namespace {

ChatRequest req(const std::string& text, std::size_t sample = 0) {
    return make_request("m", "sys", text, {}, sample);
}

// Fails the first `failures` calls with the given error type, then answers.
template <class E>
class FlakyProvider : public Provider {
public:
    explicit FlakyProvider(int failures) : failures_(failures) {}
    ChatResponse send(const ChatRequest& r) override {
        if (calls++ < failures_) throw E("flaky");
        return {"ok " + r.turns.back().text, 10, 5, json::object()};
    }
    std::string name() const override { return "flaky"; }
    std::atomic<int> calls{0};

private:
    int failures_;
};

class SlowProvider : public Provider {
public:
    ChatResponse send(const ChatRequest& r) override {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        return {r.turns.back().text, 1, 1, json::object()};
    }
    std::string name() const override { return "slow"; }
};

}  // namespace

TEST(Llm, RequestValidation) {
    EXPECT_NO_THROW(req("hi").validate());
    ChatRequest r = req("hi");
    r.turns.push_back({Role::user, "again"});
    EXPECT_THROW(r.validate(), std::invalid_argument);
    ChatRequest empty = req("hi");
    empty.turns.clear();
    EXPECT_THROW(empty.validate(), std::invalid_argument);
    SamplingParams p;
    p.top_p = 0.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Llm, FingerprintIgnoresSampleIndexButCacheKeyDoesNot) {
    EXPECT_EQ(fingerprint(req("a", 0)), fingerprint(req("a", 3)));
    EXPECT_NE(cache_key(req("a", 0)), cache_key(req("a", 3)));
    EXPECT_NE(fingerprint(req("a")), fingerprint(req("b")));
    ChatRequest hot = req("a");
    hot.params.temperature = 0.1;
    EXPECT_NE(fingerprint(req("a")), fingerprint(hot));
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Llm, ScriptedProviderLookupOrder) {
    auto p = ScriptedProvider::from_json({{"rules", json::array({{{"contains", json::array({"alpha", "beta"})},
                                                                  {"responses", json::array({"r0", "r1"})}},
                                                                 {{"contains", "alpha"}, {"response", "only-alpha"}}})},
                                          {"fallback", "fb {sample_index}"}});
    EXPECT_EQ(p->send(req("alpha beta", 0)).text, "r0");
    EXPECT_EQ(p->send(req("alpha beta", 3)).text, "r1");
    EXPECT_EQ(p->send(req("alpha", 0)).text, "only-alpha");
    EXPECT_EQ(p->send(req("gamma", 2)).text, "fb 2");
    p->add_exact(fingerprint(req("gamma")), 2, "exact");
    EXPECT_EQ(p->send(req("gamma", 2)).text, "exact");
    EXPECT_EQ(p->calls(), 5u);

    auto fp = ScriptedProvider::from_json({{"fallback", "{fp8}"}});
    EXPECT_EQ(fp->send(req("x")).text, fingerprint(req("x")).substr(0, 8));
    EXPECT_THROW(ScriptedProvider::from_json({{"rules", json::array({{{"contains", "x"}}})}}), ConfigError);
}

TEST(Llm, GatewayCachesBySampleIndex) {
    auto p = ScriptedProvider::from_json({{"fallback", "v{sample_index}"}});
    Gateway g(p, nullptr);
    EXPECT_EQ(g.complete(req("q", 0)).text, "v0");
    EXPECT_EQ(g.complete(req("q", 0)).text, "v0");
    EXPECT_EQ(g.complete(req("q", 1)).text, "v1");
    auto s = g.stats();
    EXPECT_EQ(s.provider_calls, 2u);
    EXPECT_EQ(s.cache_hits, 1u);
}

TEST(Llm, DiskCacheSurvivesGateways) {
    fixtures::TempDir dir;
    auto p = ScriptedProvider::from_json({{"fallback", "persisted"}});
    {
        Gateway g(p, std::make_shared<ResponseCache>(dir.path()));
        g.complete(req("q"));
    }
    Gateway g2(p, std::make_shared<ResponseCache>(dir.path()));
    EXPECT_EQ(g2.complete(req("q")).text, "persisted");
    EXPECT_EQ(g2.stats().provider_calls, 0u);
    EXPECT_EQ(p->calls(), 1u);
}

TEST(Llm, RetriesTransientThenSucceeds) {
    auto p = std::make_shared<FlakyProvider<TransientError>>(2);
    Gateway g(p, nullptr, {.max_attempts = 4, .base_backoff = std::chrono::milliseconds(1)});
    EXPECT_EQ(g.complete(req("x")).text, "ok x");
    EXPECT_EQ(p->calls.load(), 3);
}

TEST(Llm, ExhaustsAfterMaxAttempts) {
    auto p = std::make_shared<FlakyProvider<TransientError>>(100);
    Gateway g(p, nullptr, {.max_attempts = 3, .base_backoff = std::chrono::milliseconds(1)});
    EXPECT_THROW(g.complete(req("x")), ProviderExhausted);
    EXPECT_EQ(p->calls.load(), 3);
}

TEST(Llm, AuthErrorIsNotRetried) {
    auto p = std::make_shared<FlakyProvider<AuthError>>(100);
    Gateway g(p, nullptr, {.max_attempts = 5, .base_backoff = std::chrono::milliseconds(1)});
    EXPECT_THROW(g.complete(req("x")), AuthError);
    EXPECT_EQ(p->calls.load(), 1);
}

TEST(Llm, TokenBudgetStopsFurtherCalls) {
    auto p = std::make_shared<FlakyProvider<TransientError>>(0);
    GatewayOptions o;
    o.token_budget = 20;
    Gateway g(p, nullptr, o);
    g.complete(req("a"));
    g.complete(req("b"));
    EXPECT_EQ(g.stats().tokens_spent, 30u);
    EXPECT_THROW(g.complete(req("c")), BudgetExceeded);
    // Cached answers stay free.
    EXPECT_EQ(g.complete(req("a")).text, "ok a");
}

TEST(Llm, SanitizerStripsPromptSubstrings) {
    GatewayOptions o;
    o.sanitizer = {"SECRET"};
    Gateway g(ScriptedProvider::from_json({{"fallback", "x"}}), nullptr, o);
    auto clean = g.sanitize(make_request("m", "a SECRET b", "SECRET here", {}, 0));
    EXPECT_EQ(clean.system, "a  b");
    EXPECT_EQ(clean.turns[0].text, " here");
}

TEST(Llm, BatchIsPositionalAndBounded) {
    Gateway g(std::make_shared<SlowProvider>(), nullptr);
    std::vector<ChatRequest> rs;
    for (int i = 0; i < 16; ++i) rs.push_back(req("item" + std::to_string(i)));
    auto out = g.complete_batch(rs, 3);
    ASSERT_EQ(out.size(), 16u);
    for (int i = 0; i < 16; ++i) EXPECT_EQ(out[i].value().text, "item" + std::to_string(i));
    EXPECT_LE(g.stats().peak_in_flight, 3u);
    EXPECT_GE(g.stats().peak_in_flight, 2u);
}

TEST(Llm, BatchCarriesPerItemErrors) {
    auto p = ScriptedProvider::from_json({{"fallback", "fine"}});
    Gateway g(p, nullptr);
    ChatRequest bad = req("x");
    bad.turns.clear();
    auto out = g.complete_batch({req("a"), bad, req("b")}, 2);
    EXPECT_TRUE(out[0].ok());
    EXPECT_FALSE(out[1].ok());
    EXPECT_THROW(out[1].value(), std::invalid_argument);
    EXPECT_TRUE(out[2].ok());
}

TEST(Llm, HttpPayloadAndResponseShapes) {
    auto payload = HttpProvider::build_payload(make_request("gpt", "sys", "hello", {}, 0));
    EXPECT_EQ(payload["model"], "gpt");
    ASSERT_EQ(payload["messages"].size(), 2u);
    EXPECT_EQ(payload["messages"][0]["role"], "system");
    EXPECT_EQ(payload["messages"][1]["content"], "hello");

    auto r = HttpProvider::parse_response(
        {{"choices", json::array({{{"message", {{"content", "hi"}}}, {"finish_reason", "stop"}}})},
         {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 1}}}});
    EXPECT_EQ(r.text, "hi");
    EXPECT_EQ(r.tokens_in, 3u);
    EXPECT_EQ(r.tokens_out, 1u);
    EXPECT_THROW(HttpProvider::parse_response(json::object()), ProviderError);
}

class HttpServer : public ::testing::Test {
protected:
    void SetUp() override {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& rq, httplib::Response& rs) {
            const int n = hits++;
            if (rq.get_header_value("Authorization") != "Bearer test-token") {
                rs.status = 401;
                return;
            }
            if (mode == "flaky" && n == 0) {
                rs.status = 503;
                return;
            }
            if (mode == "bad_request") {
                rs.status = 400;
                rs.set_content("nope", "text/plain");
                return;
            }
            auto body = json::parse(rq.body);
            json reply = {{"choices", json::array({{{"message", {{"content", "echo " + body["messages"].back()["content"].get<std::string>()}}}}})},
                          {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 2}}}};
            rs.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        ::setenv("PLANSEARCH_TEST_TOKEN", "test-token", 1);
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }
    std::shared_ptr<HttpProvider> provider(const std::string& env = "PLANSEARCH_TEST_TOKEN") {
        HttpProviderOptions o;
        o.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
        o.api_key_env = env;
        o.timeout = std::chrono::seconds(5);
        return std::make_shared<HttpProvider>(o);
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> hits{0};
    std::string mode;
};

TEST_F(HttpServer, RoundTrip) {
    auto r = provider()->send(req("ping"));
    EXPECT_EQ(r.text, "echo ping");
    EXPECT_EQ(r.tokens_in, 7u);
}

TEST_F(HttpServer, RetriesServerErrorsThroughGateway) {
    mode = "flaky";
    Gateway g(provider(), nullptr, {.max_attempts = 3, .base_backoff = std::chrono::milliseconds(1)});
    EXPECT_EQ(g.complete(req("ping")).text, "echo ping");
    EXPECT_EQ(hits.load(), 2);
}

TEST_F(HttpServer, MapsStatusCodesToErrors) {
    ::setenv("PLANSEARCH_WRONG_TOKEN", "wrong", 1);
    EXPECT_THROW(provider("PLANSEARCH_WRONG_TOKEN")->send(req("x")), AuthError);
    EXPECT_THROW(provider("PLANSEARCH_UNSET_TOKEN_VAR")->send(req("x")), AuthError);
    mode = "bad_request";
    EXPECT_THROW(provider()->send(req("x")), ProviderError);
}
