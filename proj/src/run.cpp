#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/spdlog.h>

#include "plansearch/errors.hpp"
#include "plansearch/orchestrator.hpp"

namespace plansearch::orchestrator {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kRecordFiles = {"candidates.jsonl", "verdicts.jsonl", "trees.jsonl", "stats.jsonl"};

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Complete, parseable lines only; a torn trailing line is ignored.
std::vector<json> read_jsonl(const fs::path& path) {
    std::vector<json> out;
    if (!fs::exists(path)) return out;
    std::ifstream in(path, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (in.eof()) break;  // no terminating newline: the write was cut short
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) break;
        out.push_back(std::move(j));
    }
    return out;
}

// Keeps records of committed problems only, in their original order.
void trim_records(const fs::path& path, const std::set<std::string>& committed) {
    if (!fs::exists(path)) return;
    std::string kept;
    for (const auto& rec : read_jsonl(path)) {
        if (rec.contains("problem_id") && committed.count(rec.at("problem_id").get<std::string>())) {
            kept += dump(rec) + "\n";
        }
    }
    write_file_atomic(path, kept);
}

// Adds run.log to the default logger for the duration of a run.
class RunLog {
public:
    explicit RunLog(const fs::path& path) {
        sink_ = std::make_shared<spdlog::sinks::basic_file_sink_mt>(path.string());
        spdlog::default_logger()->sinks().push_back(sink_);
    }
    ~RunLog() {
        auto& sinks = spdlog::default_logger()->sinks();
        sinks.erase(std::remove(sinks.begin(), sinks.end(), sink_), sinks.end());
    }
    RunLog(const RunLog&) = delete;
    RunLog& operator=(const RunLog&) = delete;

private:
    spdlog::sink_ptr sink_;
};

struct Entry {
    search::SolutionCandidate candidate;
    std::string role = "sample";          // "sample" or "baseline"
    std::optional<std::size_t> group;     // sketch index (conditioning) or word budget (backtranslation)
};

struct Generated {
    std::vector<Entry> entries;
    std::optional<json> tree;
    std::size_t extra_tokens = 0;  // shared costs not attributed to one candidate (observation tree)
};

struct ProblemOutcome {
    std::vector<std::string> candidate_lines;
    std::vector<std::string> verdict_lines;
    std::optional<std::string> tree_line;
    std::string stats_line;
};

using SolutionPool = std::map<std::string, std::vector<std::string>>;

// { "problem_id": ["code", ...] } or [ {"problem_id", "code"} ]
SolutionPool load_pool(const fs::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError("backtranslation pool is not valid JSON: " + path.string());
    SolutionPool pool;
    if (j.is_object()) {
        for (auto& [id, codes] : j.items()) pool[id] = codes.get<std::vector<std::string>>();
    } else if (j.is_array()) {
        for (const auto& rec : j) pool[rec.at("problem_id").get<std::string>()].push_back(rec.at("code").get<std::string>());
    } else {
        throw ConfigError("backtranslation pool must be an object or an array");
    }
    return pool;
}

std::vector<Entry> as_entries(std::vector<search::SolutionCandidate> cands, const std::string& role = "sample",
                              std::optional<std::size_t> group = std::nullopt) {
    std::vector<Entry> out;
    out.reserve(cands.size());
    for (auto& c : cands) out.push_back({std::move(c), role, group});
    return out;
}

void append(std::vector<Entry>& into, std::vector<Entry> more) {
    into.insert(into.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
}

// Rethrows run-ending failures, returns the message of anything else.
std::string soft_failure(const std::exception_ptr& error) {
    try {
        std::rethrow_exception(error);
    } catch (const AuthError&) {
        throw;
    } catch (const BudgetExceeded&) {
        throw;
    } catch (const SandboxUnavailable&) {
        throw;
    } catch (const std::exception& e) {
        return e.what();
    }
}

Generated generate(const search::SearchContext& ctx, const corpus::Problem& problem, const ExperimentConfig& config,
                   const SolutionPool& pool) {
    using search::Method;
    Generated g;
    switch (config.method) {
        case Method::repeated_sampling:
            g.entries = as_entries(search::repeated_sampling(ctx, problem, config.n));
            break;
        case Method::cot:
            g.entries = as_entries(search::chain_of_thought(ctx, problem, config.n));
            break;
        case Method::idea_search:
            g.entries = as_entries(search::idea_search(ctx, problem, config.n));
            break;
        case Method::plansearch: {
            auto result = search::plan_search(ctx, problem, config.plansearch);
            if (result.skipped_leaves > 0 || result.dropped_criticisms > 0) {
                spdlog::info("{}: {} leaf sketch(es) empty, {} criticism(s) dropped", problem.id,
                             result.skipped_leaves, result.dropped_criticisms);
            }
            g.extra_tokens = result.tree.tokens_out_total();
            g.tree = search::to_json(result.tree);
            g.entries = as_entries(std::move(result.candidates));
            break;
        }
        case Method::conditioning: {
            // Unconditional draws decide whether the problem is informative at all.
            g.entries = as_entries(search::repeated_sampling(ctx, problem, config.n), "baseline");
            auto sketches = search::generate_sketches(ctx, problem, config.conditioning_sketches);
            for (std::size_t s = 0; s < sketches.size(); ++s) {
                if (!sketches[s]) continue;
                append(g.entries, as_entries(search::implement_many(ctx, problem, *sketches[s],
                                                                    config.conditioning_samples, Method::conditioning),
                                             "sample", s));
            }
            break;
        }
        case Method::backtranslation: {
            auto it = pool.find(problem.id);
            if (it == pool.end()) break;
            const auto& codes = it->second;
            const std::size_t limit = std::min(codes.size(), config.backtranslation_pool_limit);
            for (auto w : config.backtranslation_words) {
                for (std::size_t q = 0; q < limit; ++q) {
                    std::optional<search::Sketch> sketch;
                    try {
                        sketch = search::backtranslate(ctx, problem, codes[q], w, q);
                    } catch (...) {
                        spdlog::warn("{}: backtranslation of pool entry {} at {} words failed: {}", problem.id, q, w,
                                     soft_failure(std::current_exception()));
                        continue;
                    }
                    append(g.entries, as_entries(search::implement_many(ctx, problem, *sketch,
                                                                        config.backtranslation_samples,
                                                                        Method::backtranslation),
                                                 "sample", w));
                }
            }
            break;
        }
    }
    return g;
}

json group_stats_json(std::size_t group, const std::vector<std::size_t>& members,
                      const std::vector<search::SolutionCandidate>& cands, const std::vector<exec::Verdict>& verdicts) {
    std::vector<exec::Verdict> vs;
    std::size_t c = 0;
    std::size_t tokens = 0;
    for (auto i : members) {
        vs.push_back(verdicts[i]);
        if (verdicts[i].passed_all) ++c;
        tokens += cands[i].tokens_out_total;
    }
    const auto f = exec::filter_public(vs);
    return {{"group", group},           {"n", members.size()},         {"c", c},
            {"n_filtered", f.n_filtered}, {"c_filtered", f.c_filtered}, {"tokens_out_total", tokens}};
}

ProblemOutcome process_problem(const search::SearchContext& ctx, const corpus::Problem& problem,
                               const ExperimentConfig& config, const SolutionPool& pool,
                               exec::ExecutionBackend& backend) {
    Generated g = generate(ctx, problem, config, pool);

    std::vector<search::SolutionCandidate> cands;
    cands.reserve(g.entries.size());
    for (const auto& e : g.entries) cands.push_back(e.candidate);
    const auto verdicts =
        exec::run_candidates(cands, problem, config.limits, backend, exec::RunOptions{config.detail}, config.exec_workers);

    ProblemOutcome out;
    std::vector<std::size_t> samples;
    std::vector<std::size_t> baseline;
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < g.entries.size(); ++i) {
        const auto& e = g.entries[i];
        json rec = {{"problem_id", problem.id}, {"ordinal", i}, {"role", e.role}};
        if (e.group) rec["group"] = *e.group;
        json vrec = rec;
        rec["candidate"] = search::to_json(e.candidate);
        vrec["verdict"] = exec::to_json(verdicts[i]);
        out.candidate_lines.push_back(dump(rec));
        out.verdict_lines.push_back(dump(vrec));
        (e.role == "baseline" ? baseline : samples).push_back(i);
        if (e.group) groups[*e.group].push_back(i);
    }
    if (g.tree) out.tree_line = dump(*g.tree);

    std::vector<exec::Verdict> sample_verdicts;
    metrics::ProblemStats stats;
    stats.problem_id = problem.id;
    stats.tokens_out_total = g.extra_tokens;
    for (auto i : samples) {
        sample_verdicts.push_back(verdicts[i]);
        if (verdicts[i].passed_all) ++stats.c;
        stats.tokens_out_total += cands[i].tokens_out_total;
    }
    stats.n = samples.size();
    const auto filtered = exec::filter_public(sample_verdicts);
    stats.n_filtered = filtered.n_filtered;
    stats.c_filtered = filtered.c_filtered;

    json srec = metrics::to_json(stats);
    if (!groups.empty()) {
        json gj = json::array();
        for (const auto& [group, members] : groups) gj.push_back(group_stats_json(group, members, cands, verdicts));
        srec["groups"] = std::move(gj);
    }
    if (!baseline.empty()) {
        std::size_t c = 0;
        for (auto i : baseline) c += verdicts[i].passed_all ? 1 : 0;
        srec["baseline"] = {{"n", baseline.size()}, {"c", c}};
    }
    out.stats_line = dump(srec);
    return out;
}

void commit(const fs::path& dir, const std::string& problem_id, const ProblemOutcome& outcome) {
    auto append_lines = [&](const std::string& name, const std::vector<std::string>& lines) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::app);
        for (const auto& l : lines) out << l << '\n';
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + (dir / name).string());
    };
    append_lines("candidates.jsonl", outcome.candidate_lines);
    append_lines("verdicts.jsonl", outcome.verdict_lines);
    if (outcome.tree_line) append_lines("trees.jsonl", {*outcome.tree_line});
    append_lines("stats.jsonl", {outcome.stats_line});
    append_lines("progress.jsonl", {dump(json{{"problem_id", problem_id}})});
}

metrics::ProblemStats group_as_stats(const std::string& problem_id, const json& g) {
    metrics::ProblemStats s;
    s.problem_id = problem_id;
    s.n = g.at("n").get<std::size_t>();
    s.c = g.at("c").get<std::size_t>();
    s.n_filtered = g.at("n_filtered").get<std::size_t>();
    s.c_filtered = g.at("c_filtered").get<std::size_t>();
    s.tokens_out_total = g.at("tokens_out_total").get<std::size_t>();
    return s;
}

void finalize(const ExperimentConfig& config, const fs::path& dir, const std::string& dataset_name) {
    const auto records = read_jsonl(dir / "stats.jsonl");
    std::vector<metrics::ProblemStats> stats;
    for (const auto& r : records) stats.push_back(metrics::problem_stats_from_json(r));
    if (stats.empty()) throw EmptyDataset("run produced no problem statistics");

    const std::string label(search::to_string(config.method));
    std::vector<metrics::Curve> curves;
    const auto ks = metrics::k_grid(config.k_max);
    curves.push_back(metrics::pass_at_k_curve(label, stats, ks, false));
    if (config.filtering) {
        curves.push_back(metrics::pass_at_k_curve(label, stats, metrics::k_grid(config.filtered_k_max), true));
    }

    // Per-group curves (one per backtranslation word budget).
    if (config.method == search::Method::backtranslation) {
        std::map<std::size_t, std::vector<metrics::ProblemStats>> by_group;
        for (const auto& r : records) {
            for (const auto& g : r.value("groups", json::array())) {
                by_group[g.at("group").get<std::size_t>()].push_back(
                    group_as_stats(r.at("problem_id").get<std::string>(), g));
            }
        }
        for (const auto& [w, gs] : by_group) {
            curves.push_back(metrics::pass_at_k_curve(fmt::format("{}@{}w", label, w), gs, ks, false));
        }
    }

    std::ostringstream csv;
    metrics::write_curves_csv(csv, curves);
    write_file_atomic(dir / "curves.csv", csv.str());

    std::size_t candidates = 0;
    std::size_t format_failures = 0;
    std::size_t sample_candidates = 0;
    for (const auto& rec : read_jsonl(dir / "candidates.jsonl")) {
        ++candidates;
        if (!rec.at("candidate").at("format_ok").get<bool>()) ++format_failures;
        if (rec.at("role") == "sample") ++sample_candidates;
    }
    std::size_t tokens = 0;
    for (const auto& s : stats) tokens += s.tokens_out_total;

    json summary = {{"method", label},
                    {"model", config.model},
                    {"dataset", dataset_name},
                    {"problems", stats.size()},
                    {"candidates", candidates},
                    {"format_failures", format_failures},
                    {"k_max", config.k_max},
                    {"pass_at_1", metrics::dataset_pass_at_k(stats, 1)},
                    {"pass_at_k_max", metrics::dataset_pass_at_k(stats, config.k_max)},
                    {"tokens_out_total", tokens},
                    {"tokens_per_candidate",
                     sample_candidates ? static_cast<double>(tokens) / static_cast<double>(sample_candidates) : 0.0}};
    if (config.filtering) {
        double f1 = 0.0;
        for (const auto& s : stats) f1 += metrics::filtered_pass_at_k(s, 1);
        summary["filtered_pass_at_1"] = f1 / static_cast<double>(stats.size());
    }

    if (config.method == search::Method::conditioning) {
        // Problems solved always or never without a sketch carry no signal.
        std::vector<metrics::SketchGroup> groups;
        json excluded = json::array();
        for (const auto& r : records) {
            const auto id = r.at("problem_id").get<std::string>();
            const auto& b = r.at("baseline");
            const auto bn = b.at("n").get<std::size_t>();
            const auto bc = b.at("c").get<std::size_t>();
            if (bc == 0 || bc == bn) {
                excluded.push_back(id);
                continue;
            }
            for (const auto& g : r.value("groups", json::array())) {
                groups.push_back({id, g.at("group").get<std::size_t>(), g.at("n").get<std::size_t>(),
                                  g.at("c").get<std::size_t>()});
            }
        }
        json cj = {{"excluded_problems", excluded}};
        if (groups.empty()) {
            cj["note"] = "no problem has an unconditional solve rate strictly between 0 and 1";
        } else {
            const auto rates = metrics::conditional_solve_rates(groups);
            json per_sketch = json::array();
            for (const auto& s : rates.per_sketch) {
                per_sketch.push_back({{"problem_id", s.problem_id}, {"sketch", s.sketch_index}, {"rate", s.rate}});
            }
            json per_problem = json::array();
            for (const auto& p : rates.per_problem) {
                per_problem.push_back({{"problem_id", p.problem_id}, {"rate", p.rate}});
            }
            cj["per_sketch"] = std::move(per_sketch);
            cj["per_problem"] = std::move(per_problem);
            cj["sketch_polarization"] = rates.sketch_polarization;
            cj["problem_polarization"] = rates.problem_polarization;
        }
        write_file_atomic(dir / "conditioning.json", cj.dump(2) + "\n");
    }

    write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

json gateway_json(const llm::GatewayStats& s) {
    return {{"provider_calls", s.provider_calls}, {"cache_hits", s.cache_hits},
            {"tokens_spent", s.tokens_spent},     {"tokens_out_returned", s.tokens_out_returned},
            {"peak_in_flight", s.peak_in_flight}};
}

std::shared_ptr<llm::ResponseCache> cache_for(const ExperimentConfig& config, const fs::path& dir,
                                              const RunOptions& options) {
    if (options.cache) return options.cache;
    return std::make_shared<llm::ResponseCache>(config.cache_dir ? *config.cache_dir : dir / "cache");
}

llm::GatewayOptions gateway_options(const ExperimentConfig& config) {
    llm::GatewayOptions g;
    g.max_attempts = config.max_attempts;
    g.base_backoff = std::chrono::milliseconds(config.backoff_ms);
    g.token_budget = config.token_budget;
    g.sanitizer = config.sanitizer;
    g.default_batch_limit = config.request_concurrency;
    return g;
}

search::PromptTemplates prompts_for(const ExperimentConfig& config) {
    return config.prompts_dir ? search::PromptTemplates::load(*config.prompts_dir)
                              : search::PromptTemplates::defaults();
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& config, const fs::path& run_dir, const RunOptions& options) {
    config.validate();
    fs::create_directories(run_dir);

    const json snapshot = to_json(config);
    const fs::path config_path = run_dir / "config.json";
    if (fs::exists(config_path)) {
        json previous = json::parse(read_file(config_path), nullptr, false);
        if (previous != snapshot) {
            throw ConfigError("run directory " + run_dir.string() + " holds a run with a different configuration");
        }
    } else {
        write_file_atomic(config_path, snapshot.dump(2) + "\n");
    }

    RunLog log(run_dir / "run.log");
    const corpus::Dataset dataset = load_problems(config);
    SolutionPool pool;
    std::vector<const corpus::Problem*> problems;
    if (config.method == search::Method::backtranslation) {
        pool = load_pool(*config.backtranslation_pool);
        for (const auto& p : dataset.problems) {
            if (pool.count(p.id)) {
                problems.push_back(&p);
            } else {
                spdlog::warn("{}: no passing solutions in the backtranslation pool; skipped", p.id);
            }
        }
        if (problems.empty()) throw EmptyDataset("no dataset problem has a backtranslation pool entry");
    } else {
        for (const auto& p : dataset.problems) problems.push_back(&p);
    }

    // Resume: keep what was fully committed, drop anything after it.
    std::set<std::string> committed;
    {
        std::string progress;
        for (const auto& rec : read_jsonl(run_dir / "progress.jsonl")) {
            committed.insert(rec.at("problem_id").get<std::string>());
            progress += dump(rec) + "\n";
        }
        if (fs::exists(run_dir / "progress.jsonl")) write_file_atomic(run_dir / "progress.jsonl", progress);
        for (const auto& name : kRecordFiles) trim_records(run_dir / name, committed);
    }

    RunArtifacts art;
    art.dir = run_dir;
    art.problems_total = problems.size();
    std::vector<const corpus::Problem*> pending;
    for (const auto* p : problems) {
        if (committed.count(p->id)) {
            ++art.problems_resumed;
        } else {
            pending.push_back(p);
        }
    }
    if (art.problems_resumed > 0) {
        spdlog::info("resuming {}: {} problem(s) already committed, {} to go", run_dir.string(), art.problems_resumed,
                     pending.size());
    }
    if (options.max_problems && pending.size() > *options.max_problems) pending.resize(*options.max_problems);

    auto provider = options.provider ? options.provider : make_provider(config);
    auto backend = options.backend ? options.backend : make_backend(config);
    auto cache = cache_for(config, run_dir, options);
    llm::Gateway gateway(provider, cache, gateway_options(config));
    const auto prompts = prompts_for(config);
    const search::SearchContext ctx{gateway, prompts, config.model, config.params, config.request_concurrency};

    // Bounded window of problems in flight; commits happen here, in dataset order.
    std::deque<std::future<ProblemOutcome>> window;
    std::size_t next = 0;
    auto launch = [&] {
        const corpus::Problem* p = pending[next++];
        window.push_back(std::async(std::launch::async, [&, p] { return process_problem(ctx, *p, config, pool, *backend); }));
    };
    std::size_t done = 0;
    while (done < pending.size()) {
        while (next < pending.size() && window.size() < config.problem_concurrency) launch();
        ProblemOutcome outcome = window.front().get();
        window.pop_front();
        commit(run_dir, pending[done]->id, outcome);
        spdlog::info("{}: committed {} candidate(s)", pending[done]->id, outcome.candidate_lines.size());
        ++done;
    }

    art.gateway = gateway.stats();
    write_file_atomic(run_dir / "gateway.json", gateway_json(art.gateway).dump(2) + "\n");
    art.problems_completed = art.problems_resumed + done;
    art.candidates = read_jsonl(run_dir / "candidates.jsonl").size();
    if (art.problems_completed == art.problems_total) {
        finalize(config, run_dir, dataset.name);
        art.finished = true;
        if (config.diversity) {
            RunOptions div = options;
            div.provider = provider;
            div.cache = cache;
            run_diversity(run_dir, div);
        }
    } else {
        spdlog::info("stopped after {} of {} problem(s); rerun to resume", art.problems_completed,
                     art.problems_total);
    }
    return art;
}

std::vector<double> default_temperature_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 12; ++i) grid.push_back(i / 10.0);
    return grid;
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& config, const std::string& param, std::vector<double> grid,
                                  const fs::path& out_dir, const RunOptions& options) {
    static const std::set<std::string> kParams = {"temperature", "top_p", "n", "max_tokens"};
    if (!kParams.count(param)) throw ConfigError("cannot sweep over '" + param + "'");
    if (grid.empty()) throw ConfigError("sweep grid is empty");

    std::vector<double> distinct;
    for (double v : grid) {
        const bool seen =
            std::any_of(distinct.begin(), distinct.end(), [&](double d) { return std::abs(d - v) < 1e-9; });
        if (seen) {
            spdlog::warn("sweep: duplicate {} value {} dropped", param, v);
        } else {
            distinct.push_back(v);
        }
    }

    fs::create_directories(out_dir);
    RunOptions shared = options;
    if (!shared.cache) shared.cache = std::make_shared<llm::ResponseCache>(out_dir / "cache");

    std::vector<SweepPoint> points;
    std::string csv = "param,value,run_dir,status,pass1,pass_k_max,filtered_pass1,error\n";
    for (double v : distinct) {
        SweepPoint point;
        point.value = v;
        point.dir = out_dir / fmt::format("{}={}", param, v);
        try {
            ExperimentConfig child = config;
            apply_setting(child, param, fmt::format("{}", param == "n" || param == "max_tokens"
                                                              ? fmt::format("{}", static_cast<long long>(std::llround(v)))
                                                              : fmt::format("{}", v)));
            child.validate();
            point.artifacts = run_experiment(child, point.dir, shared);
            point.ok = point.artifacts->finished;
            if (!point.ok) point.error = "incomplete";
        } catch (const std::exception& e) {
            point.error = e.what();
            spdlog::error("sweep point {}={} failed: {}", param, v, e.what());
        }
        std::string p1, pk, f1;
        if (point.ok) {
            const json summary = json::parse(read_file(point.dir / "summary.json"));
            p1 = fmt::format("{}", summary.at("pass_at_1").get<double>());
            pk = fmt::format("{}", summary.at("pass_at_k_max").get<double>());
            if (summary.contains("filtered_pass_at_1")) f1 = fmt::format("{}", summary.at("filtered_pass_at_1").get<double>());
        }
        std::string err = point.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        csv += fmt::format("{},{},{},{},{},{},{},{}\n", param, v, point.dir.filename().string(),
                           point.ok ? "ok" : "failed", p1, pk, f1, err);
        points.push_back(std::move(point));
    }
    write_file_atomic(out_dir / "sweep.csv", csv);
    return points;
}

diversity::DiversityReport run_diversity(const fs::path& run_dir, const RunOptions& options) {
    const ExperimentConfig config = config_from_json(json::parse(read_file(run_dir / "config.json")));
    const corpus::Dataset dataset = load_problems(config);

    auto provider = options.provider ? options.provider : make_provider(config);
    llm::Gateway gateway(provider, cache_for(config, run_dir, options), gateway_options(config));
    const auto prompts = prompts_for(config);
    // Supporting calls (backtranslation, judging) run greedy on the judge model.
    llm::SamplingParams judge_params = config.params;
    judge_params.temperature = 0.0;
    judge_params.top_p = 1.0;
    const search::SearchContext ctx{gateway, prompts, config.judge_model, judge_params, config.request_concurrency};
    diversity::LlmJudge judge(gateway, prompts, config.judge_model, judge_params, config.request_concurrency);

    // Well-formed generated programs, per problem, in record order.
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> codes;
    for (const auto& rec : read_jsonl(run_dir / "candidates.jsonl")) {
        if (rec.at("role") != "sample") continue;
        const auto& c = rec.at("candidate");
        if (!c.at("format_ok").get<bool>() || !c.contains("code") || c.at("code").is_null()) continue;
        const auto id = rec.at("problem_id").get<std::string>();
        if (!codes.count(id)) order.push_back(id);
        codes[id].push_back(c.at("code").get<std::string>());
    }

    std::vector<diversity::DiversityResult> results;
    json skipped = json::array();
    for (std::size_t pi = 0; pi < order.size(); ++pi) {
        const auto& id = order[pi];
        const corpus::Problem* problem = dataset.find(id);
        const auto& pool = codes.at(id);
        if (!problem || pool.size() < 2) {
            skipped.push_back(id);
            continue;
        }
        // Subsample before backtranslating so only judged programs cost a call.
        const std::uint64_t seed = config.seed + pi;
        std::vector<std::size_t> working(pool.size());
        std::iota(working.begin(), working.end(), std::size_t{0});
        if (pool.size() > config.diversity_subsample) {
            std::vector<std::size_t> picked;
            std::mt19937_64 rng(seed);
            std::sample(working.begin(), working.end(), std::back_inserter(picked), config.diversity_subsample, rng);
            working = std::move(picked);
        }
        std::vector<diversity::JudgeItem> items;
        for (auto i : working) {
            std::string idea;
            try {
                idea = search::backtranslate(ctx, *problem, pool[i], config.diversity_words, 0).text;
            } catch (...) {
                spdlog::warn("{}: backtranslating program {} failed: {}", id, i, soft_failure(std::current_exception()));
            }
            items.push_back({pool[i], std::move(idea)});
        }
        auto result = diversity::diversity_score(*problem, items, judge, seed, config.diversity_subsample);
        // Re-key judgments to positions in the full pool.
        for (auto& s : result.judgments) {
            s.i = working[s.i];
            s.j = working[s.j];
        }
        result.pool_size = pool.size();
        result.working_set = working;
        result.sampled = pool.size() > config.diversity_subsample;
        result.seed = result.sampled ? std::optional<std::uint64_t>(seed) : std::nullopt;
        results.push_back(std::move(result));
    }

    auto report = diversity::summarize(results, config.seed);
    json problems = json::array();
    std::string csv = "problem_id,D,pool_size,judged,sampled,seed,similar_pairs,total_pairs,unparsable\n";
    for (const auto& r : results) {
        json rj = diversity::to_json(r);
        problems.push_back(std::move(rj));
        csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.problem_id, r.D, r.pool_size, r.working_set.size(),
                           r.sampled ? 1 : 0, r.seed ? fmt::format("{}", *r.seed) : std::string{}, r.similar_pairs,
                           r.total_pairs, r.unparsable);
    }
    json out = {{"report", diversity::to_json(report)}, {"problems", std::move(problems)}, {"skipped", skipped}};
    write_file_atomic(run_dir / "diversity.json", out.dump(2) + "\n");
    write_file_atomic(run_dir / "diversity.csv", csv);
    if (results.empty()) spdlog::warn("diversity: no problem had two or more well-formed programs");
    return report;
}

}  // namespace plansearch::orchestrator
