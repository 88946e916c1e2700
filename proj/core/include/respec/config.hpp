#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "respec/learner.hpp"
#include "respec/rl.hpp"

namespace respec {

// Everything that determines a run. Loaded from JSON; CLI flags override
// individual fields afterwards. Identical configs give byte-identical
// output files.
struct ExperimentConfig {
    uint64_t seed = 1;
    std::string scenario = "baseline";
    std::string out_dir = "out";

    // model shapes
    int vocab_size = 8;
    int target_order = 2;
    int drafter_order = 1;
    double temperature = 1.0;
    double actor_init_scale = 0.5;

    // task
    RewardSpec reward_spec{1, 2};
    std::vector<std::vector<int>> prompts{{0, 1}, {2, 3}, {4, 5}, {0, 2}};
    std::vector<double> eos_biases{1.0, 0.0, -1.0, -2.5};
    int group_size = 8;
    int max_len = 24;
    int steps = 200;
    double policy_lr = 0.2;

    // drafter learner
    KDPolicy kd{1, WeightMode::Reward, 0.0, 4.0, 0.5};
    int warmup_rounds = 4;       // uniform-KD rounds to initialize the drafter
    double kd_step_cost = 0.02;  // simulated learner time per distilled token
    bool async_learner = true;
    int buffer_capacity = 4096;

    // cost simulation + profiling
    TimingModel timing{};
    std::vector<int> grid_rounds{1, 2, 4};
    std::vector<int> grid_branching{1, 2};
    std::vector<int> grid_draft_len{1, 2, 4};
    std::vector<int> batch_sizes{1, 2, 4, 8, 16, 32, 64};
    int profile_cycles = 64;
    int profile_requests = 64;
    SDConfig fixed_cfg = SDConfig::tree(2, 1, 2);

    // skewed-workload scenario
    int skew_requests = 32;
    int skew_max_len = 48;

    Task make_task() const;
    std::vector<SDConfig> config_grid() const; // rounds x branching x draft_len

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json & j);
};

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string & s);

nlohmann::json sd_config_to_json(const SDConfig & cfg);
SDConfig sd_config_from_json(const nlohmann::json & j);

} // namespace respec
