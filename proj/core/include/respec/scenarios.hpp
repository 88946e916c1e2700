#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "respec/config.hpp"
#include "respec/server.hpp"

namespace respec {

// Shared experiment setup: a randomly initialized actor and a drafter
// warmed up by a few rounds of uniform distillation on SD-off rollouts,
// so speculative decoding starts from a useful acceptance rate.
struct Env {
    TabularARModel actor;
    TabularARModel drafter;
    Task task;
};

Env make_env(const ExperimentConfig & cfg);

// Offline profiling pass over the full config grid.
ProfileTable build_profile(const ExperimentConfig & cfg, const TabularARModel & actor,
                           const TabularARModel & drafter);

// A scenario's machine-readable output: one summary object plus
// append-only JSONL streams.
struct ScenarioResult {
    std::string scenario;
    nlohmann::json summary;
    std::vector<nlohmann::json> step_lines;
    std::vector<nlohmann::json> learner_lines;
    std::vector<nlohmann::json> switch_lines;
    std::optional<ProfileTable> table;
};

const std::vector<std::string> & scenario_names();
bool is_valid_scenario(const std::string & name);

ScenarioResult run_scenario(const ExperimentConfig & cfg);

// Writes steps.jsonl / learner.jsonl / switches.jsonl / summary.json
// (and profile.csv + profile.json when the scenario profiled).
void write_scenario_files(const ScenarioResult & result, const std::string & out_dir);

// CLI entry points. Return process exit codes (0 ok, 1 verification
// failure, 2 usage error).
int cmd_profile(const ExperimentConfig & cfg);
int cmd_train(const ExperimentConfig & cfg);
int cmd_verify(const ExperimentConfig & cfg);

} // namespace respec
