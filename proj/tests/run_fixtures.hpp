#pragma once
// End-to-end scaffolding: a workspace holding a toy dataset, canned rules,
// a provider script and a config, plus helpers to compare run directories.

#include <chrono>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fixtures.hpp"
#include "plansearch/llm.hpp"
#include "plansearch/orchestrator.hpp"

namespace fixtures {

// Files whose bytes must not depend on timing, threads or resumption.
inline const std::vector<std::string>& deterministic_artifacts() {
    static const std::vector<std::string> names = {"config.json",    "candidates.jsonl", "verdicts.jsonl",
                                                   "trees.jsonl",    "stats.jsonl",      "progress.jsonl",
                                                   "curves.csv",     "summary.json"};
    return names;
}

// Names of the deterministic artifacts that differ (missing counts as differing).
inline std::vector<std::string> differing_artifacts(const fs::path& a, const fs::path& b) {
    std::vector<std::string> out;
    for (const auto& name : deterministic_artifacts()) {
        const bool ea = fs::exists(a / name);
        const bool eb = fs::exists(b / name);
        if (ea != eb || (ea && read_text(a / name) != read_text(b / name))) out.push_back(name);
    }
    return out;
}

inline std::size_t count_lines(const fs::path& p) {
    std::istringstream in(read_text(p));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    return n;
}

struct Workspace {
    explicit Workspace(std::size_t problems = 3, const json& script = rs_script()) {
        dataset_json = toy_dataset(problems);
        dataset = write_json(dir / "dataset.json", dataset_json);
        rules = write_json(dir / "rules.json", canned_rules(dataset_json));
        this->script = write_json(dir / "script.json", script);
    }

    plansearch::orchestrator::ExperimentConfig config(const std::string& extra = "") const {
        std::istringstream in(config_text(dataset, script, rules, extra));
        return plansearch::orchestrator::parse_config(in, dir.path());
    }

    TempDir dir;
    json dataset_json;
    fs::path dataset;
    fs::path rules;
    fs::path script;
};

// Wraps a provider and sleeps before every answer, to make runs slow enough
// to interrupt.
class SlowProvider : public plansearch::llm::Provider {
public:
    SlowProvider(std::shared_ptr<plansearch::llm::Provider> inner, std::chrono::milliseconds delay)
        : inner_(std::move(inner)), delay_(delay) {}
    plansearch::llm::ChatResponse send(const plansearch::llm::ChatRequest& r) override {
        std::this_thread::sleep_for(delay_);
        return inner_->send(r);
    }
    std::string name() const override { return inner_->name(); }

private:
    std::shared_ptr<plansearch::llm::Provider> inner_;
    std::chrono::milliseconds delay_;
};

}  // namespace fixtures
