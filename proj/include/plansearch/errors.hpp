#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plansearch {

// Base for every error raised by the harness.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ─── corpus ───────────────────────────────────────────────────

class MalformedFile : public Error {
public:
    using Error::Error;
};

class SchemaViolation : public Error {
public:
    SchemaViolation(std::string problem_id, const std::string& what)
        : Error("schema violation in problem '" + problem_id + "': " + what),
          problem_id_(std::move(problem_id)) {}

    const std::string& problem_id() const noexcept { return problem_id_; }

private:
    std::string problem_id_;
};

// A date window kept no problem at all.
class EmptyResult : public Error {
public:
    EmptyResult(const std::string& what, std::size_t undated)
        : Error(what), undated_(undated) {}

    std::size_t undated() const noexcept { return undated_; }

private:
    std::size_t undated_;
};

// ─── llm gateway ──────────────────────────────────────────────

// Retryable provider failure (rate limit, 5xx, connection reset).
class TransientError : public Error {
public:
    using Error::Error;
};

// Non-retryable provider failure other than auth (bad request, bad payload).
class ProviderError : public Error {
public:
    using Error::Error;
};

class ProviderExhausted : public Error {
public:
    using Error::Error;
};

class AuthError : public Error {
public:
    using Error::Error;
};

class BudgetExceeded : public Error {
public:
    using Error::Error;
};

// ─── search / executor / metrics / diversity / orchestrator ───

class SketchEmpty : public Error {
public:
    using Error::Error;
};

class SandboxUnavailable : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class ZeroBaseline : public Error {
public:
    using Error::Error;
};

class EmptyGroup : public Error {
public:
    using Error::Error;
};

class TooFewCandidates : public Error {
public:
    using Error::Error;
};

class InsufficientRuns : public Error {
public:
    using Error::Error;
};

class MissingBaseline : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace plansearch
