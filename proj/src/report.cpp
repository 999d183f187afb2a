#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "plansearch/errors.hpp"
#include "plansearch/orchestrator.hpp"

namespace plansearch::orchestrator {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("not valid JSON: " + path.string());
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

struct Labeled {
    const RunRecord* run;
    std::string label;
};

// One row per (model, dataset); runs keep their input order within a row.
using Groups = std::map<std::pair<std::string, std::string>, std::vector<Labeled>>;

Groups group_runs(const std::vector<RunRecord>& runs) {
    Groups groups;
    for (const auto& run : runs) {
        auto& row = groups[{run.config.model, run.dataset_name}];
        std::string label(search::to_string(run.config.method));
        const bool taken = std::any_of(row.begin(), row.end(), [&](const Labeled& l) { return l.label == label; });
        if (taken) label += fmt::format("(T={})", run.config.params.temperature);
        row.push_back({&run, label});
    }
    return groups;
}

std::string pct(double v) { return fmt::format("{:.1f}", 100.0 * v); }

}  // namespace

RunRecord load_run(const fs::path& run_dir) {
    RunRecord r;
    r.dir = run_dir;
    r.config = config_from_json(read_json(run_dir / "config.json"));
    if (!fs::exists(run_dir / "summary.json")) {
        throw EmptyDataset("run " + run_dir.string() + " has not finished (no summary.json)");
    }
    const json summary = read_json(run_dir / "summary.json");
    r.dataset_name = summary.value("dataset", r.config.dataset.stem().string());
    r.tokens_per_candidate = summary.value("tokens_per_candidate", 0.0);
    std::ifstream in(run_dir / "stats.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) r.stats.push_back(metrics::problem_stats_from_json(json::parse(line)));
    }
    if (r.stats.empty()) throw EmptyDataset("run " + run_dir.string() + " has no problem statistics");
    if (fs::exists(run_dir / "diversity.json")) {
        const json d = read_json(run_dir / "diversity.json");
        if (!d.at("problems").empty()) r.diversity = d.at("report").at("dataset_D").get<double>();
    }
    return r;
}

ReportResult report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir, const ReportOptions& options) {
    if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
    std::vector<RunRecord> runs;
    for (const auto& d : run_dirs) runs.push_back(load_run(d));
    fs::create_directories(out_dir);
    const Groups groups = group_runs(runs);
    ReportResult result;

    // Columns: every label at k = 1 and at its run's k_max, in first-seen order.
    std::vector<std::pair<std::string, std::size_t>> columns;
    for (const auto& [key, row] : groups) {
        for (const auto& l : row) {
            for (std::size_t k : {std::size_t{1}, l.run->config.k_max}) {
                auto col = std::make_pair(l.label, k);
                if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
            }
        }
    }

    std::string csv = "model,dataset";
    std::string md = "| model | dataset |";
    std::string rule = "|---|---|";
    for (const auto& [label, k] : columns) {
        csv += fmt::format(",{}@{}", label, k);
        md += fmt::format(" {}@{} |", label, k);
        rule += "---|";
    }
    csv += "\n";
    md += "\n" + rule + "\n";
    for (const auto& [key, row] : groups) {
        csv += key.first + "," + key.second;
        md += "| " + key.first + " | " + key.second + " |";
        for (const auto& [label, k] : columns) {
            auto it = std::find_if(row.begin(), row.end(), [&](const Labeled& l) { return l.label == label; });
            if (it == row.end() || (k != 1 && k != it->run->config.k_max)) {
                csv += ",";
                md += " – |";
                continue;
            }
            const double v = metrics::dataset_pass_at_k(it->run->stats, k);
            csv += fmt::format(",{}", v);
            md += " " + pct(v) + " |";
        }
        csv += "\n";
        md += "\n";
    }
    result.table_csv = out_dir / "table.csv";
    result.table_markdown = md;
    write_text(result.table_csv, csv);
    write_text(out_dir / "table.md", md);
    result.written = {out_dir / "table.csv", out_dir / "table.md"};

    // Bar data: headline numbers per run.
    std::string bars = "model,dataset,method,metric,value\n";
    for (const auto& [key, row] : groups) {
        for (const auto& l : row) {
            const auto& st = l.run->stats;
            const auto& cfg = l.run->config;
            auto bar = [&](const std::string& metric, double v) {
                bars += fmt::format("{},{},{},{},{}\n", key.first, key.second, l.label, metric, v);
            };
            bar("pass@1", metrics::dataset_pass_at_k(st, 1));
            bar(fmt::format("pass@{}", cfg.k_max), metrics::dataset_pass_at_k(st, cfg.k_max));
            if (cfg.filtering) {
                for (std::size_t k : {std::size_t{1}, cfg.filtered_k_max}) {
                    double sum = 0.0;
                    for (const auto& s : st) sum += metrics::filtered_pass_at_k(s, k);
                    bar(fmt::format("filtered_pass@{}", k), sum / static_cast<double>(st.size()));
                }
            }
        }
    }
    write_text(out_dir / "bars.csv", bars);
    result.written.push_back(out_dir / "bars.csv");

    if (options.normalized) {
        std::vector<metrics::Curve> curves;
        for (const auto& [key, row] : groups) {
            for (const auto& l : row) {
                if (!(l.run->tokens_per_candidate > 0.0)) {
                    spdlog::warn("{}: no token counts, skipped in the compute-normalized curves", l.run->dir.string());
                    continue;
                }
                auto curve = metrics::pass_at_k_curve(fmt::format("{}/{}/{}", key.first, key.second, l.label),
                                                      l.run->stats, metrics::k_grid(l.run->config.k_max), false);
                curves.push_back(metrics::compute_normalized_curve(curve, l.run->tokens_per_candidate));
            }
        }
        std::ostringstream out;
        metrics::write_curves_csv(out, curves);
        write_text(out_dir / "normalized.csv", out.str());
        result.written.push_back(out_dir / "normalized.csv");
    }

    // Diversity against search gain, when enough runs carry a score.
    std::vector<diversity::RunSummary> scored;
    for (const auto& run : runs) {
        if (!run.diversity) continue;
        scored.push_back({std::string(search::to_string(run.config.method)), run.config.model, *run.diversity,
                          metrics::dataset_pass_at_k(run.stats, 1), metrics::dataset_pass_at_k(run.stats, 200)});
    }
    if (scored.size() >= 3) {
        const auto gain = diversity::diversity_gain_report(scored);
        std::ostringstream out;
        diversity::write_gain_csv(out, gain);
        write_text(out_dir / "diversity_gain.csv", out.str());
        write_text(out_dir / "diversity_gain.json", diversity::to_json(gain).dump(2) + "\n");
        result.written.push_back(out_dir / "diversity_gain.csv");
        result.written.push_back(out_dir / "diversity_gain.json");
    } else if (!scored.empty()) {
        spdlog::info("diversity/gain correlation skipped: {} scored run(s), need 3", scored.size());
    }

    // Relative curves go last: a missing baseline must not cost the other outputs.
    if (options.relative) {
        std::vector<metrics::Curve> curves;
        for (const auto& [key, row] : groups) {
            auto base = std::find_if(row.begin(), row.end(), [](const Labeled& l) {
                return l.run->config.method == search::Method::repeated_sampling;
            });
            if (base == row.end()) {
                throw MissingBaseline(fmt::format("no repeated_sampling run for model {} on {}; relative curves "
                                                  "need its pass@1",
                                                  key.first, key.second));
            }
            const double baseline = metrics::dataset_pass_at_k(base->run->stats, 1);
            for (const auto& l : row) {
                auto curve = metrics::pass_at_k_curve(fmt::format("{}/{}/{}", key.first, key.second, l.label),
                                                      l.run->stats, metrics::k_grid(l.run->config.k_max), false);
                auto rel = metrics::relative_improvement(curve, baseline);
                rel.label = curve.label;
                curves.push_back(std::move(rel));
            }
        }
        std::ostringstream out;
        metrics::write_curves_csv(out, curves);
        write_text(out_dir / "relative.csv", out.str());
        result.written.push_back(out_dir / "relative.csv");
    }
    return result;
}

}  // namespace plansearch::orchestrator
