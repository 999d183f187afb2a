#pragma once
// Experiment driving: configuration, per-problem generate → execute →
// persist, resume, temperature sweeps, the diversity pass over a finished
// run, and cross-run reports.
//
// Run directory layout (all JSONL files are append-only, one record per line,
// problems committed in dataset order):
//
//   config.json        resolved configuration snapshot
//   candidates.jsonl   {problem_id, ordinal, role, group?, candidate}
//   verdicts.jsonl     {problem_id, ordinal, role, verdict}
//   trees.jsonl        observation trees (plansearch only)
//   stats.jsonl        per-problem n, c, n_filtered, c_filtered, tokens
//   progress.jsonl     {problem_id} once every record of a problem is on disk
//   curves.csv         method,k_or_tokens,value,filtered
//   summary.json       headline numbers
//   conditioning.json  per-sketch / per-problem solve rates (conditioning)
//   diversity.json / diversity.csv   (after the diversity pass)
//   gateway.json, run.log            operational, not part of the deterministic set
//   cache/             response cache unless cache_dir points elsewhere

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "plansearch/corpus.hpp"
#include "plansearch/diversity.hpp"
#include "plansearch/executor.hpp"
#include "plansearch/llm.hpp"
#include "plansearch/metrics.hpp"
#include "plansearch/search.hpp"

namespace plansearch::orchestrator {

struct ExperimentConfig {
    // data
    std::filesystem::path dataset;
    std::optional<std::string> date_start;  // YYYY-MM-DD, inclusive
    std::optional<std::string> date_end;

    // generation
    search::Method method = search::Method::repeated_sampling;
    std::string model = "gpt-4o-mini";
    std::string judge_model = "gpt-4o-mini";
    std::string provider = "scripted";  // scripted | http
    std::optional<std::filesystem::path> mock_script;
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    llm::SamplingParams params;
    std::size_t n = 200;  // samples for repeated_sampling / cot / idea_search
    search::PlanSearchConfig plansearch;
    std::optional<std::filesystem::path> prompts_dir;
    std::vector<std::string> sanitizer;
    std::optional<std::size_t> token_budget;
    int max_attempts = 4;
    std::size_t backoff_ms = 500;

    // execution
    std::string executor = "shim";  // shim | canned
    std::vector<std::string> shim_command = {"plansearch-shim"};
    std::optional<std::filesystem::path> canned_rules;
    exec::ExecutionLimits limits;
    bool detail = false;

    // concurrency
    std::size_t problem_concurrency = 2;
    std::size_t request_concurrency = 8;
    int exec_workers = 0;  // 0: OpenMP default

    // metrics
    std::size_t k_max = 200;
    std::size_t filtered_k_max = 20;
    bool filtering = true;
    std::uint64_t seed = 0;

    // conditioning experiment
    std::size_t conditioning_sketches = 5;
    std::size_t conditioning_samples = 25;

    // backtranslation experiment
    std::optional<std::filesystem::path> backtranslation_pool;
    std::vector<std::size_t> backtranslation_words = {10, 25, 50, 100};
    std::size_t backtranslation_samples = 25;
    std::size_t backtranslation_pool_limit = 5;

    // diversity pass
    bool diversity = false;
    std::size_t diversity_words = 100;
    std::size_t diversity_subsample = diversity::kDefaultSubsample;

    std::optional<std::filesystem::path> cache_dir;

    // Throws ConfigError.
    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);

using Overrides = std::vector<std::pair<std::string, std::string>>;

// key = value lines, '#' comments, optional [section] headers (cosmetic:
// keys are global). Unknown keys and bad values throw ConfigError. Relative
// paths resolve against `base_dir`. Overrides apply before validation.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {},
                              const Overrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

// Applies one `key=value` override (same keys as the file).
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir = {});

// ─── wiring ───────────────────────────────────────────────────

std::shared_ptr<llm::Provider> make_provider(const ExperimentConfig& config);
std::shared_ptr<exec::ExecutionBackend> make_backend(const ExperimentConfig& config);
corpus::Dataset load_problems(const ExperimentConfig& config);

struct RunOptions {
    std::optional<std::size_t> max_problems;  // stop after committing this many new problems
    std::shared_ptr<llm::Provider> provider;  // overrides the configured provider
    std::shared_ptr<exec::ExecutionBackend> backend;
    std::shared_ptr<llm::ResponseCache> cache;  // shared cache (sweeps)
};

struct RunArtifacts {
    std::filesystem::path dir;
    std::size_t problems_total = 0;
    std::size_t problems_completed = 0;   // committed, including resumed ones
    std::size_t problems_resumed = 0;     // skipped because already on disk
    std::size_t candidates = 0;           // records in candidates.jsonl
    bool finished = false;                // curves + summary written
    llm::GatewayStats gateway;
};

// Generates, executes and persists every problem, then writes curves and the
// summary. Rerunning on the same directory resumes: committed problems are
// skipped and partial trailing records are discarded. Throws ConfigError if
// the directory holds a run with a different configuration.
RunArtifacts run_experiment(const ExperimentConfig& config, const std::filesystem::path& run_dir,
                            const RunOptions& options = {});

// ─── sweeps ───────────────────────────────────────────────────

struct SweepPoint {
    double value = 0.0;
    std::filesystem::path dir;
    bool ok = false;
    std::string error;
    std::optional<RunArtifacts> artifacts;
};

// 0.0, 0.1, ..., 1.2
std::vector<double> default_temperature_grid();

// One child run per distinct grid value under out_dir/<param>=<value>, all
// sharing out_dir/cache. Duplicate values are dropped with a warning; child
// failures are recorded, not rethrown. Writes out_dir/sweep.csv.
// Supported params: temperature, top_p, n, max_tokens.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& config, const std::string& param,
                                  std::vector<double> grid, const std::filesystem::path& out_dir,
                                  const RunOptions& options = {});

// ─── diversity pass ───────────────────────────────────────────

// Backtranslates every well-formed candidate of a finished run, judges all
// pairs per problem, and writes diversity.json / diversity.csv into the run.
diversity::DiversityReport run_diversity(const std::filesystem::path& run_dir, const RunOptions& options = {});

// ─── reports ──────────────────────────────────────────────────

struct RunRecord {
    std::filesystem::path dir;
    ExperimentConfig config;
    std::string dataset_name;
    std::vector<metrics::ProblemStats> stats;
    double tokens_per_candidate = 0.0;
    std::optional<double> diversity;
};

// Reads config.json and stats.jsonl (and diversity.json when present).
RunRecord load_run(const std::filesystem::path& run_dir);

struct ReportOptions {
    bool relative = true;     // relative-improvement curves (needs a repeated_sampling run)
    bool normalized = true;   // compute-normalized curves
};

struct ReportResult {
    std::filesystem::path table_csv;
    std::string table_markdown;
    std::vector<std::filesystem::path> written;
};

// Writes table.csv / table.md, bars.csv, normalized.csv, relative.csv and,
// with >= 3 diversity-scored runs, diversity_gain.csv / .json. The table is
// always written first; relative curves then throw MissingBaseline when some
// (model, dataset) group has no repeated_sampling run.
ReportResult report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir,
                    const ReportOptions& options = {});

}  // namespace plansearch::orchestrator
