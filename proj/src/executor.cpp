#include "plansearch/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <stdexcept>

#include <fmt/format.h>
#include <omp.h>

#include "plansearch/errors.hpp"

extern char** environ;

namespace plansearch::exec {

using nlohmann::json;

void ExecutionLimits::validate() const {
    if (!(wall_time > 0.0)) throw std::invalid_argument("wall_time must be positive");
    if (memory == 0) throw std::invalid_argument("memory limit must be positive");
    if (output_cap == 0) throw std::invalid_argument("output cap must be positive");
}

std::string_view to_string(TestStatus s) {
    switch (s) {
        case TestStatus::pass: return "pass";
        case TestStatus::wrong_output: return "wrong_output";
        case TestStatus::timeout: return "timeout";
        case TestStatus::runtime_error: return "runtime_error";
        case TestStatus::output_overflow: return "output_overflow";
    }
    return "unknown";
}

TestStatus test_status_from_string(std::string_view s) {
    for (auto st : {TestStatus::pass, TestStatus::wrong_output, TestStatus::timeout, TestStatus::runtime_error,
                    TestStatus::output_overflow}) {
        if (to_string(st) == s) return st;
    }
    throw std::invalid_argument("unknown test status '" + std::string(s) + "'");
}

std::string_view to_string(JobStatus s) {
    switch (s) {
        case JobStatus::ok: return "ok";
        case JobStatus::timeout: return "timeout";
        case JobStatus::runtime_error: return "runtime_error";
        case JobStatus::output_overflow: return "output_overflow";
    }
    return "unknown";
}

JobStatus job_status_from_string(std::string_view s) {
    for (auto st : {JobStatus::ok, JobStatus::timeout, JobStatus::runtime_error, JobStatus::output_overflow}) {
        if (to_string(st) == s) return st;
    }
    throw std::invalid_argument("unknown job status '" + std::string(s) + "'");
}

json to_json(const Verdict& v) {
    json tests = json::array();
    for (const auto& t : v.per_test) {
        tests.push_back({{"status", to_string(t.status)}, {"runtime", t.runtime}, {"stderr", t.stderr_excerpt}});
    }
    return {{"problem_id", v.problem_id},   {"sample_index", v.sample_index}, {"executed", v.executed},
            {"passed_public", v.passed_public}, {"passed_all", v.passed_all},
            {"complete_detail", v.complete_detail}, {"per_test", tests}};
}

Verdict verdict_from_json(const json& j) {
    Verdict v;
    v.problem_id = j.at("problem_id").get<std::string>();
    v.sample_index = j.at("sample_index").get<std::size_t>();
    v.executed = j.at("executed").get<bool>();
    v.passed_public = j.at("passed_public").get<bool>();
    v.passed_all = j.at("passed_all").get<bool>();
    v.complete_detail = j.value("complete_detail", false);
    for (const auto& t : j.at("per_test")) {
        v.per_test.push_back({test_status_from_string(t.at("status").get<std::string>()),
                              t.at("runtime").get<double>(), t.value("stderr", std::string{})});
    }
    return v;
}

json to_json(const JobSpec& s) {
    return {{"v", kShimProtocolVersion}, {"source", s.source},     {"stdin", s.stdin_data},
            {"wall_time", s.wall_time},  {"memory", s.memory}, {"output_cap", s.output_cap}};
}

JobSpec job_spec_from_json(const json& j) {
    if (j.value("v", 0) != kShimProtocolVersion) throw std::invalid_argument("unsupported shim protocol version");
    JobSpec s;
    s.source = j.at("source").get<std::string>();
    s.stdin_data = j.value("stdin", std::string{});
    s.wall_time = j.at("wall_time").get<double>();
    s.memory = j.at("memory").get<std::size_t>();
    s.output_cap = j.at("output_cap").get<std::size_t>();
    return s;
}

json to_json(const JobResult& r) {
    return {{"v", kShimProtocolVersion}, {"status", to_string(r.status)}, {"stdout", r.stdout_text},
            {"stderr", r.stderr_text},  {"runtime", r.runtime},        {"limits_advisory", r.limits_advisory}};
}

JobResult job_result_from_json(const json& j) {
    if (j.value("v", 0) != kShimProtocolVersion) throw std::invalid_argument("unsupported shim protocol version");
    JobResult r;
    r.status = job_status_from_string(j.at("status").get<std::string>());
    r.stdout_text = j.value("stdout", std::string{});
    r.stderr_text = j.value("stderr", std::string{});
    r.runtime = j.value("runtime", 0.0);
    r.limits_advisory = j.value("limits_advisory", false);
    return r;
}

// ─── ShimBackend ──────────────────────────────────────────────

namespace {

struct Pipe {
    int fd[2] = {-1, -1};
    Pipe() {
        if (pipe2(fd, O_CLOEXEC) != 0) throw SandboxUnavailable(std::string("pipe: ") + std::strerror(errno));
    }
    ~Pipe() { close_all(); }
    void close_end(int i) {
        if (fd[i] >= 0) ::close(fd[i]);
        fd[i] = -1;
    }
    void close_all() {
        close_end(0);
        close_end(1);
    }
};

struct ProcessOutput {
    int exit_status = -1;
    bool killed_by_watchdog = false;
    std::string out;
    std::string err;
};

ProcessOutput spawn_and_talk(const std::vector<std::string>& argv, const std::string& input, double deadline_s) {
    Pipe in, out, err;
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in.fd[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out.fd[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, err.fd[1], STDERR_FILENO);

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    pid_t pid = -1;
    int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) throw SandboxUnavailable(fmt::format("cannot start shim '{}': {}", argv[0], std::strerror(rc)));

    in.close_end(0);
    out.close_end(1);
    err.close_end(1);
    fcntl(in.fd[1], F_SETFL, O_NONBLOCK);

    ProcessOutput result;
    std::size_t written = 0;
    if (input.empty()) in.close_end(1);
    const auto start = std::chrono::steady_clock::now();
    char buf[65536];
    while (out.fd[0] >= 0 || err.fd[0] >= 0) {
        std::vector<pollfd> fds;
        if (in.fd[1] >= 0) fds.push_back({in.fd[1], POLLOUT, 0});
        if (out.fd[0] >= 0) fds.push_back({out.fd[0], POLLIN, 0});
        if (err.fd[0] >= 0) fds.push_back({err.fd[0], POLLIN, 0});
        double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > deadline_s) {
            ::kill(pid, SIGKILL);
            result.killed_by_watchdog = true;
            break;
        }
        int ready = ::poll(fds.data(), fds.size(), 100);
        if (ready < 0 && errno != EINTR) break;
        for (const auto& p : fds) {
            if (p.revents == 0) continue;
            if (p.fd == in.fd[1]) {
                ssize_t n = ::write(in.fd[1], input.data() + written, input.size() - written);
                if (n > 0) written += static_cast<std::size_t>(n);
                if (n < 0 && errno != EAGAIN) written = input.size();  // reader went away
                if (written >= input.size()) in.close_end(1);
            } else {
                ssize_t n = ::read(p.fd, buf, sizeof(buf));
                std::string& sink = (p.fd == out.fd[0]) ? result.out : result.err;
                if (n > 0) {
                    sink.append(buf, static_cast<std::size_t>(n));
                } else if (n == 0 || errno != EAGAIN) {
                    if (p.fd == out.fd[0]) out.close_end(0); else err.close_end(0);
                }
            }
        }
    }
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    result.exit_status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return result;
}

}  // namespace

ShimBackend::ShimBackend(std::vector<std::string> argv, double grace_seconds)
    : argv_(std::move(argv)), grace_seconds_(grace_seconds) {
    if (argv_.empty()) throw SandboxUnavailable("empty shim command");
    // a shim that dies before reading its job must not take the harness down
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

JobResult ShimBackend::run_job(const JobSpec& spec) {
    std::vector<std::string> argv = argv_;
    auto output = spawn_and_talk(argv, to_json(spec).dump(), spec.wall_time + grace_seconds_);
    if (output.killed_by_watchdog) {
        throw SandboxUnavailable(fmt::format("shim exceeded wall_time + {}s grace and was killed", grace_seconds_));
    }
    if (output.exit_status != 0) {
        throw SandboxUnavailable(fmt::format("shim exited with status {}: {}", output.exit_status,
                                             output.err.substr(0, 500)));
    }
    try {
        return job_result_from_json(json::parse(output.out));
    } catch (const std::exception& e) {
        throw SandboxUnavailable(std::string("shim returned an invalid JobResult: ") + e.what());
    }
}

// ─── CannedBackend ────────────────────────────────────────────

CannedBackend::CannedBackend(json rules) : rules_(std::move(rules)) {
    if (!rules_.is_object()) throw ConfigError("canned shim rules must be a JSON object");
}

std::shared_ptr<CannedBackend> CannedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SandboxUnavailable("cannot open canned shim rules " + path.string());
    try {
        return std::make_shared<CannedBackend>(json::parse(in));
    } catch (const json::parse_error& e) {
        throw SandboxUnavailable("canned shim rules are not valid JSON: " + std::string(e.what()));
    }
}

namespace {

JobResult canned_result(const json& rule, const JobSpec& spec) {
    JobResult r;
    r.status = job_status_from_string(rule.value("status", std::string("ok")));
    r.stderr_text = rule.value("stderr", std::string{});
    r.runtime = rule.value("runtime", 0.0);
    if (rule.value("echo_stdin", false)) {
        r.stdout_text = spec.stdin_data;
    } else if (rule.contains("stdout_map") && rule.at("stdout_map").contains(spec.stdin_data)) {
        r.stdout_text = rule.at("stdout_map").at(spec.stdin_data).get<std::string>();
    } else {
        r.stdout_text = rule.value("stdout", std::string{});
    }
    if (r.stdout_text.size() > spec.output_cap) {
        r.stdout_text.resize(spec.output_cap);
        r.status = JobStatus::output_overflow;
    }
    return r;
}

}  // namespace

JobResult CannedBackend::run_job(const JobSpec& spec) {
    try {
        for (const auto& rule : rules_.value("rules", json::array())) {
            if (rule.contains("source_contains") &&
                spec.source.find(rule.at("source_contains").get<std::string>()) == std::string::npos) {
                continue;
            }
            if (rule.contains("stdin") && rule.at("stdin").get<std::string>() != spec.stdin_data) continue;
            return canned_result(rule, spec);
        }
        return canned_result(rules_.value("default", json::object()), spec);
    } catch (const std::exception& e) {
        throw SandboxUnavailable(std::string("canned shim rule error: ") + e.what());
    }
}

// ─── judging ──────────────────────────────────────────────────

std::string normalize_output(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        auto last = line.find_last_not_of(" \t\r\f\v");
        lines.push_back(last == std::string_view::npos ? std::string_view{} : line.substr(0, last + 1));
        start = end + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0) out += '\n';
        out += lines[i];
    }
    return out;
}

Verdict run_candidate(const search::SolutionCandidate& candidate, const corpus::Problem& problem,
                      const ExecutionLimits& limits, ExecutionBackend& backend, const RunOptions& options) {
    limits.validate();
    Verdict v;
    v.problem_id = problem.id;
    v.sample_index = candidate.sample_index;
    if (!candidate.format_ok || !candidate.code) return v;  // judged failed without execution

    v.executed = true;
    JobSpec spec;
    spec.source = *candidate.code;
    spec.wall_time = problem.time_limit_override.value_or(limits.wall_time);
    spec.memory = limits.memory;
    spec.output_cap = limits.output_cap;

    const std::size_t n_public = problem.public_tests.size();
    const std::size_t total = problem.test_count();
    bool public_ok = true;
    bool all_ok = true;
    for (std::size_t i = 0; i < total; ++i) {
        const corpus::TestCase& test = i < n_public ? problem.public_tests[i] : problem.private_tests[i - n_public];
        spec.stdin_data = test.input;
        JobResult job = backend.run_job(spec);

        TestOutcome outcome;
        outcome.runtime = job.runtime;
        outcome.stderr_excerpt = job.stderr_text.substr(0, 1000);
        switch (job.status) {
            case JobStatus::ok:
                outcome.status = normalize_output(job.stdout_text) == normalize_output(test.expected_output)
                                     ? TestStatus::pass
                                     : TestStatus::wrong_output;
                break;
            case JobStatus::timeout: outcome.status = TestStatus::timeout; break;
            case JobStatus::runtime_error: outcome.status = TestStatus::runtime_error; break;
            case JobStatus::output_overflow: outcome.status = TestStatus::output_overflow; break;
        }
        const bool passed = outcome.status == TestStatus::pass;
        v.per_test.push_back(std::move(outcome));
        if (!passed) {
            all_ok = false;
            if (i < n_public) public_ok = false;
            if (!options.detail) break;
        }
    }
    v.passed_public = public_ok;
    v.passed_all = all_ok;
    v.complete_detail = v.per_test.size() == total;
    return v;
}

std::vector<Verdict> run_candidates(std::span<const search::SolutionCandidate> candidates,
                                    const corpus::Problem& problem, const ExecutionLimits& limits,
                                    ExecutionBackend& backend, const RunOptions& options, int workers) {
    const auto n = static_cast<std::ptrdiff_t>(candidates.size());
    std::vector<Verdict> verdicts(candidates.size());
    std::vector<std::exception_ptr> errors(candidates.size());
    const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            verdicts[i] = run_candidate(candidates[i], problem, limits, backend, options);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return verdicts;
}

namespace serial {

std::vector<Verdict> run_candidates(std::span<const search::SolutionCandidate> candidates,
                                    const corpus::Problem& problem, const ExecutionLimits& limits,
                                    ExecutionBackend& backend, const RunOptions& options) {
    std::vector<Verdict> verdicts;
    verdicts.reserve(candidates.size());
    for (const auto& c : candidates) verdicts.push_back(run_candidate(c, problem, limits, backend, options));
    return verdicts;
}

}  // namespace serial

FilterSummary filter_public(std::span<const Verdict> verdicts) {
    FilterSummary s;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        if (!verdicts[i].passed_public) continue;
        s.retained.push_back(i);
        if (verdicts[i].passed_all) ++s.c_filtered;
    }
    s.n_filtered = s.retained.size();
    return s;
}

}  // namespace plansearch::exec
