#pragma once
// Candidate judging. Each test is one sandbox job; the sandbox itself lives
// behind ExecutionBackend so the harness can run against the real shim
// (subprocess protocol, JSON in / JSON out) or a canned in-process fake.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "plansearch/corpus.hpp"
#include "plansearch/search.hpp"

namespace plansearch::exec {

struct ExecutionLimits {
    double wall_time = 10.0;                   // seconds per test
    std::size_t memory = std::size_t{1} << 30; // bytes
    std::size_t output_cap = std::size_t{16} << 20;

    void validate() const;
};

enum class TestStatus { pass, wrong_output, timeout, runtime_error, output_overflow };

std::string_view to_string(TestStatus s);
TestStatus test_status_from_string(std::string_view s);

struct TestOutcome {
    TestStatus status = TestStatus::runtime_error;
    double runtime = 0.0;
    std::string stderr_excerpt;
};

struct Verdict {
    std::string problem_id;
    std::size_t sample_index = 0;
    std::vector<TestOutcome> per_test;  // public tests first, then private; a prefix under early exit
    bool passed_public = false;
    bool passed_all = false;
    bool executed = false;              // false for format failures
    bool complete_detail = false;       // per_test covers every test
};

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);

// ─── shim wire format, version 1 ──────────────────────────────

inline constexpr int kShimProtocolVersion = 1;

enum class JobStatus { ok, timeout, runtime_error, output_overflow };

std::string_view to_string(JobStatus s);
JobStatus job_status_from_string(std::string_view s);

struct JobSpec {
    std::string source;
    std::string stdin_data;
    double wall_time = 10.0;
    std::size_t memory = std::size_t{1} << 30;
    std::size_t output_cap = std::size_t{16} << 20;
};

struct JobResult {
    JobStatus status = JobStatus::ok;
    std::string stdout_text;
    std::string stderr_text;
    double runtime = 0.0;
    bool limits_advisory = false;  // the shim could not enforce memory limits
};

nlohmann::json to_json(const JobSpec& s);
JobSpec job_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const JobResult& r);
JobResult job_result_from_json(const nlohmann::json& j);

class ExecutionBackend {
public:
    virtual ~ExecutionBackend() = default;
    // Must be safe to call concurrently. Throws SandboxUnavailable when the
    // sandbox itself is broken (never for a failing program).
    virtual JobResult run_job(const JobSpec& spec) = 0;
};

// Spawns `argv` once per job, JobSpec JSON on stdin, JobResult JSON on stdout.
class ShimBackend : public ExecutionBackend {
public:
    explicit ShimBackend(std::vector<std::string> argv, double grace_seconds = 30.0);
    JobResult run_job(const JobSpec& spec) override;

private:
    std::vector<std::string> argv_;
    double grace_seconds_;
};

// Replays canned results from rules; never runs anything.
//
//   { "rules": [ { "source_contains": str?, "stdin": str?,
//                  "status": "ok"|..., "stdout": str?, "echo_stdin": bool?,
//                  "stdout_map": {stdin: stdout}?, "stderr": str?, "runtime": num? } ],
//     "default": { ...same result fields... } }
//
// The first rule whose conditions all hold wins; without a match the default
// applies (status ok, empty output unless configured).
class CannedBackend : public ExecutionBackend {
public:
    explicit CannedBackend(nlohmann::json rules);
    static std::shared_ptr<CannedBackend> from_file(const std::filesystem::path& path);

    JobResult run_job(const JobSpec& spec) override;

private:
    nlohmann::json rules_;
};

// Strips trailing whitespace from each line and drops trailing blank lines.
std::string normalize_output(std::string_view text);

struct RunOptions {
    bool detail = false;  // run every test even after a failure
};

Verdict run_candidate(const search::SolutionCandidate& candidate, const corpus::Problem& problem,
                      const ExecutionLimits& limits, ExecutionBackend& backend, const RunOptions& options = {});

// Judges every candidate, OpenMP-parallel over candidates. Verdicts are
// positionally aligned and identical to the serial reference.
std::vector<Verdict> run_candidates(std::span<const search::SolutionCandidate> candidates,
                                    const corpus::Problem& problem, const ExecutionLimits& limits,
                                    ExecutionBackend& backend, const RunOptions& options = {}, int workers = 0);

namespace serial {
std::vector<Verdict> run_candidates(std::span<const search::SolutionCandidate> candidates,
                                    const corpus::Problem& problem, const ExecutionLimits& limits,
                                    ExecutionBackend& backend, const RunOptions& options = {});
}  // namespace serial

struct FilterSummary {
    std::vector<std::size_t> retained;  // indices of candidates passing every public test
    std::size_t n_filtered = 0;
    std::size_t c_filtered = 0;         // retained candidates that pass the full suite
};

FilterSummary filter_public(std::span<const Verdict> verdicts);

}  // namespace plansearch::exec
