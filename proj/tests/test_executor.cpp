#include <gtest/gtest.h>

#include <cstdlib>

#include "fixtures.hpp"
#include "plansearch/corpus.hpp"
#include "plansearch/errors.hpp"
#include "plansearch/executor.hpp"

using namespace plansearch;
using namespace plansearch::exec;
using nlohmann::json;

namespace {

corpus::Dataset toy() { return corpus::parse_dataset(fixtures::toy_dataset(2).dump()); }

search::SolutionCandidate cand(const std::string& code, std::size_t idx = 0) {
    search::SolutionCandidate c;
    c.problem_id = "p1";
    c.code = code;
    c.format_ok = true;
    c.sample_index = idx;
    return c;
}

// Scoped environment variable.
class EnvVar {
public:
    EnvVar(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
    ~EnvVar() { ::unsetenv(name_); }

private:
    const char* name_;
};

}  // namespace

TEST(Executor, NormalizesOutput) {
    EXPECT_EQ(normalize_output("3  \n4\t\n\n\n"), "3\n4");
    EXPECT_EQ(normalize_output("a\r\nb"), normalize_output("a\nb"));
    EXPECT_EQ(normalize_output(""), "");
}

TEST(Executor, WireFormatRoundTrips) {
    JobSpec s{"print(1)", "1 2\n", 2.5, 1024, 2048};
    json j = to_json(s);
    EXPECT_EQ(j["v"], kShimProtocolVersion);
    auto back = job_spec_from_json(j);
    EXPECT_EQ(back.source, s.source);
    EXPECT_EQ(back.memory, 1024u);
    JobResult r{JobStatus::timeout, "o", "e", 1.5, true};
    auto rb = job_result_from_json(to_json(r));
    EXPECT_EQ(rb.status, JobStatus::timeout);
    EXPECT_TRUE(rb.limits_advisory);
    json wrong = to_json(r);
    wrong["v"] = 2;
    EXPECT_ANY_THROW(job_result_from_json(wrong));
}

TEST(Executor, LimitsValidate) {
    ExecutionLimits l;
    EXPECT_NO_THROW(l.validate());
    l.wall_time = 0;
    EXPECT_THROW(l.validate(), std::invalid_argument);
}

TEST(Executor, JudgesAgainstCannedRules) {
    auto ds = toy();
    CannedBackend backend(fixtures::canned_rules(fixtures::toy_dataset(2)));
    const auto& p = ds.problems[0];
    ExecutionLimits lim;

    auto good = run_candidate(cand("CORRECT"), p, lim, backend);
    EXPECT_TRUE(good.passed_all);
    EXPECT_TRUE(good.passed_public);
    EXPECT_TRUE(good.complete_detail);
    EXPECT_EQ(good.per_test.size(), 3u);

    auto pub = run_candidate(cand("PUBLIC_ONLY"), p, lim, backend);
    EXPECT_TRUE(pub.passed_public);
    EXPECT_FALSE(pub.passed_all);
    EXPECT_EQ(pub.per_test[1].status, TestStatus::wrong_output);

    auto crash = run_candidate(cand("CRASH"), p, lim, backend);
    EXPECT_FALSE(crash.passed_public);
    EXPECT_EQ(crash.per_test.size(), 1u);  // early exit
    EXPECT_EQ(crash.per_test[0].status, TestStatus::runtime_error);
    EXPECT_EQ(crash.per_test[0].stderr_excerpt, "boom");

    auto detail = run_candidate(cand("CRASH"), p, lim, backend, {.detail = true});
    EXPECT_EQ(detail.per_test.size(), 3u);
    EXPECT_TRUE(detail.complete_detail);
}

TEST(Executor, FormatFailuresAreNotExecuted) {
    auto ds = toy();
    CannedBackend backend(fixtures::canned_rules(fixtures::toy_dataset(2)));
    search::SolutionCandidate c;
    c.problem_id = "p1";
    auto v = run_candidate(c, ds.problems[0], {}, backend);
    EXPECT_FALSE(v.executed);
    EXPECT_FALSE(v.passed_public);
    EXPECT_FALSE(v.passed_all);
    EXPECT_TRUE(v.per_test.empty());
}

TEST(Executor, ParallelMatchesSerial) {
    auto ds = toy();
    CannedBackend backend(fixtures::canned_rules(fixtures::toy_dataset(2)));
    std::vector<search::SolutionCandidate> cs;
    const char* kinds[] = {"CORRECT", "WRONG", "PUBLIC_ONLY", "CRASH"};
    for (std::size_t i = 0; i < 64; ++i) cs.push_back(cand(kinds[i % 4], i));
    auto par = run_candidates(cs, ds.problems[0], {}, backend, {}, 4);
    auto ser = serial::run_candidates(cs, ds.problems[0], {}, backend);
    ASSERT_EQ(par.size(), ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) EXPECT_EQ(to_json(par[i]).dump(), to_json(ser[i]).dump());

    auto f = filter_public(par);
    EXPECT_EQ(f.n_filtered, 32u);
    EXPECT_EQ(f.c_filtered, 16u);
    EXPECT_EQ(f.retained.size(), 32u);
}

TEST(Executor, VerdictJsonRoundTrips) {
    auto ds = toy();
    CannedBackend backend(fixtures::canned_rules(fixtures::toy_dataset(2)));
    auto v = run_candidate(cand("PUBLIC_ONLY", 3), ds.problems[0], {}, backend, {.detail = true});
    EXPECT_EQ(to_json(verdict_from_json(to_json(v))).dump(), to_json(v).dump());
}

TEST(Executor, CannedRejectsBadRules) {
    EXPECT_THROW(CannedBackend(json::array()), ConfigError);
    CannedBackend bad(json{{"rules", json::array({{{"status", "exploded"}}})}});
    EXPECT_THROW(bad.run_job({}), SandboxUnavailable);
}

// ─── subprocess protocol against the fake shim ────────────────

class Shim : public ::testing::Test {
protected:
    void SetUp() override {
        rules_ = fixtures::write_json(dir_ / "rules.json", fixtures::canned_rules(fixtures::toy_dataset(2)));
    }
    ShimBackend backend(double grace = 30.0) { return ShimBackend({FAKE_SHIM_PATH}, grace); }

    fixtures::TempDir dir_;
    fixtures::fs::path rules_;
};

TEST_F(Shim, JudgesThroughTheProtocol) {
    EnvVar rules("FAKE_SHIM_RULES", rules_.string());
    EnvVar log("FAKE_SHIM_LOG", (dir_ / "jobs.jsonl").string());
    auto ds = toy();
    auto b = backend();
    ExecutionLimits lim;
    lim.wall_time = 3.0;
    auto v = run_candidate(cand("CORRECT"), ds.problems[0], lim, b);
    EXPECT_TRUE(v.passed_all);

    // Every job carries the protocol version, the source and the limits.
    std::istringstream jobs(fixtures::read_text(dir_ / "jobs.jsonl"));
    std::string line;
    std::size_t count = 0;
    while (std::getline(jobs, line)) {
        json j = json::parse(line);
        EXPECT_EQ(j["v"], 1);
        EXPECT_EQ(j["source"], "CORRECT");
        EXPECT_DOUBLE_EQ(j["wall_time"].get<double>(), 3.0);
        ++count;
    }
    EXPECT_EQ(count, 3u);
}

TEST_F(Shim, EchoesWithoutRules) {
    auto b = backend();
    JobSpec s;
    s.source = "x";
    s.stdin_data = "hello";
    EXPECT_EQ(b.run_job(s).stdout_text, "hello");
}

TEST_F(Shim, MisbehavioursAreSandboxUnavailable) {
    for (const char* mode : {"crash", "garbage", "wrong_version"}) {
        EnvVar m("FAKE_SHIM_MODE", mode);
        auto b = backend();
        EXPECT_THROW(b.run_job({}), SandboxUnavailable) << mode;
    }
}

TEST_F(Shim, HungShimIsKilledByWatchdog) {
    EnvVar m("FAKE_SHIM_MODE", "hang");
    auto b = backend(0.2);
    JobSpec s;
    s.wall_time = 0.1;
    const auto t0 = std::chrono::steady_clock::now();
    EXPECT_THROW(b.run_job(s), SandboxUnavailable);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(10));
}

TEST_F(Shim, MissingBinaryIsSandboxUnavailable) {
    ShimBackend b({(dir_ / "no-such-shim").string()});
    EXPECT_THROW(b.run_job({}), SandboxUnavailable);
    EXPECT_THROW(ShimBackend({}).run_job({}), SandboxUnavailable);
}
