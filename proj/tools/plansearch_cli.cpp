// plansearch — command-line front end.
//
//   plansearch run --config exp.conf --out runs/rs [--mock-script s.json] [--set key=value ...]
//   plansearch sweep --config exp.conf --out runs/sweep [--param temperature] [--values 0,0.5,1]
//   plansearch report runs/rs runs/ps --out reports/
//   plansearch diversity --run runs/ps [--mock-script s.json]
//   plansearch validate-dataset problems.json [--start 2024-05-01 --end 2024-09-01]
//
// Exit codes: 0 success, 1 failure, 2 usage, 3 report written without the
// relative curves (no repeated-sampling baseline).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "plansearch/corpus.hpp"
#include "plansearch/errors.hpp"
#include "plansearch/orchestrator.hpp"

namespace fs = std::filesystem;
namespace orch = plansearch::orchestrator;

namespace {

orch::Overrides collect_overrides(const std::vector<std::string>& sets, const std::string& mock_script) {
    orch::Overrides out;
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw plansearch::ConfigError("--set expects key=value, got '" + s + "'");
        out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!mock_script.empty()) {
        out.emplace_back("provider", "scripted");
        out.emplace_back("mock_script", mock_script);
    }
    return out;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        try {
            out.push_back(std::stod(token));
        } catch (const std::exception&) {
            throw plansearch::ConfigError("bad grid value '" + token + "'");
        }
        token.clear();
    };
    for (char ch : text) {
        if (ch == ',' || ch == ' ') {
            flush();
        } else {
            token.push_back(ch);
        }
    }
    flush();
    return out;
}

int validate_dataset(const fs::path& path, const std::string& start, const std::string& end) {
    auto ds = plansearch::corpus::load_dataset(path);
    std::size_t pub = 0;
    std::size_t priv = 0;
    std::size_t dated = 0;
    for (const auto& p : ds.problems) {
        pub += p.public_tests.size();
        priv += p.private_tests.size();
        if (p.release_date) ++dated;
    }
    fmt::print("{}: {} problem(s), {} public + {} private test(s), {} dated\n", ds.name, ds.problems.size(), pub,
               priv, dated);
    if (!start.empty() || !end.empty()) {
        using namespace std::chrono;
        auto parse = [](const std::string& s, plansearch::corpus::Date fallback) {
            if (s.empty()) return fallback;
            auto d = plansearch::corpus::parse_date(s);
            if (!d) throw plansearch::ConfigError("bad date '" + s + "' (want YYYY-MM-DD)");
            return *d;
        };
        const auto window = plansearch::corpus::filter_by_date(ds, parse(start, year{1} / January / day{1}),
                                                               parse(end, year{9999} / December / day{31}));
        fmt::print("date window keeps {} problem(s); {} undated dropped\n", window.dataset.problems.size(),
                   window.undated_dropped);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inference-time search orchestrator and evaluation harness for code generation"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    std::string config_path;
    std::string out_dir;
    std::string mock_script;
    std::vector<std::string> sets;
    std::optional<std::size_t> max_problems;

    auto* run = app.add_subcommand("run", "Run one experiment (resumes an existing run directory)");
    run->add_option("-c,--config", config_path, "Key-value config file")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--out", out_dir, "Run directory")->required();
    run->add_option("--mock-script", mock_script, "Use the scripted provider with this script")
        ->check(CLI::ExistingFile);
    run->add_option("--set", sets, "Override a config key (key=value), repeatable");
    run->add_option("--max-problems", max_problems, "Stop after committing this many new problems");

    std::string param = "temperature";
    std::string values;
    auto* sweep = app.add_subcommand("sweep", "One run per grid value, sharing a response cache");
    sweep->add_option("-c,--config", config_path, "Key-value config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("-o,--out", out_dir, "Sweep directory")->required();
    sweep->add_option("--param", param, "temperature | top_p | n | max_tokens")->capture_default_str();
    sweep->add_option("--values", values, "Comma-separated grid (default for temperature: 0.0..1.2 step 0.1)");
    sweep->add_option("--mock-script", mock_script, "Use the scripted provider with this script")
        ->check(CLI::ExistingFile);
    sweep->add_option("--set", sets, "Override a config key (key=value), repeatable");

    std::vector<std::string> run_dirs;
    bool no_relative = false;
    bool no_normalized = false;
    auto* rep = app.add_subcommand("report", "Tables and curve CSVs across finished runs");
    rep->add_option("runs", run_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
    rep->add_option("-o,--out", out_dir, "Report directory")->required();
    rep->add_flag("--no-relative", no_relative, "Skip relative-improvement curves");
    rep->add_flag("--no-normalized", no_normalized, "Skip compute-normalized curves");

    std::string run_dir;
    auto* div = app.add_subcommand("diversity", "Judge pairwise idea similarity over a finished run");
    div->add_option("-r,--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
    div->add_option("--mock-script", mock_script, "Use the scripted provider with this script")
        ->check(CLI::ExistingFile);

    std::string dataset_path;
    std::string start;
    std::string end;
    auto* val = app.add_subcommand("validate-dataset", "Check a problem file and summarize it");
    val->add_option("dataset", dataset_path, "Dataset JSON")->required()->check(CLI::ExistingFile);
    val->add_option("--start", start, "Window start, YYYY-MM-DD");
    val->add_option("--end", end, "Window end, YYYY-MM-DD");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*run) {
            const auto config = orch::load_config(config_path, collect_overrides(sets, mock_script));
            orch::RunOptions opts;
            opts.max_problems = max_problems;
            const auto art = orch::run_experiment(config, out_dir, opts);
            fmt::print("{}: {}/{} problem(s) committed ({} resumed), {} candidate(s){}\n", out_dir,
                       art.problems_completed, art.problems_total, art.problems_resumed, art.candidates,
                       art.finished ? "" : " — incomplete, rerun to resume");
            return 0;
        }
        if (*sweep) {
            const auto config = orch::load_config(config_path, collect_overrides(sets, mock_script));
            std::vector<double> grid;
            if (!values.empty()) {
                grid = parse_values(values);
            } else if (param == "temperature") {
                grid = orch::default_temperature_grid();
            } else {
                throw plansearch::ConfigError("--values is required when sweeping " + param);
            }
            const auto points = orch::run_sweep(config, param, grid, out_dir);
            std::size_t failed = 0;
            for (const auto& p : points) failed += p.ok ? 0 : 1;
            fmt::print("{} point(s), {} failed; see {}\n", points.size(), failed, (fs::path(out_dir) / "sweep.csv").string());
            return failed == 0 ? 0 : 1;
        }
        if (*rep) {
            std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
            try {
                const auto result = orch::report(dirs, out_dir, {!no_relative, !no_normalized});
                std::cout << result.table_markdown;
            } catch (const plansearch::MissingBaseline& e) {
                spdlog::error("{}", e.what());
                std::ifstream md(fs::path(out_dir) / "table.md");
                std::cout << md.rdbuf();
                return 3;
            }
            return 0;
        }
        if (*div) {
            orch::RunOptions opts;
            if (!mock_script.empty()) opts.provider = plansearch::llm::ScriptedProvider::from_file(mock_script);
            const auto report = orch::run_diversity(run_dir, opts);
            fmt::print("dataset D = {:.4f} over {} problem(s){}\n", report.dataset_D, report.per_problem_D.size(),
                       report.unparsable ? fmt::format(", {} unparsable judgment(s)", report.unparsable) : "");
            return 0;
        }
        if (*val) return validate_dataset(dataset_path, start, end);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
