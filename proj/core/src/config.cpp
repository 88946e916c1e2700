#include "respec/config.hpp"

#include <stdexcept>

namespace respec {

Task ExperimentConfig::make_task() const {
    if (prompts.size() != eos_biases.size()) {
        throw std::invalid_argument("config: prompts/eos_biases length mismatch");
    }
    Task task;
    for (const auto & p : prompts) {
        task.prompts.emplace_back(p);
    }
    task.eos_biases = eos_biases;
    task.reward_spec = reward_spec;
    task.group_size = group_size;
    task.max_len = max_len;
    return task;
}

std::vector<SDConfig> ExperimentConfig::config_grid() const {
    std::vector<SDConfig> grid;
    for (int s : grid_rounds) {
        for (int t : grid_branching) {
            for (int n : grid_draft_len) {
                grid.push_back(SDConfig::tree(s, t, n));
            }
        }
    }
    return grid;
}

std::string to_string(WeightMode mode) {
    switch (mode) {
        case WeightMode::Reward: return "reward";
        case WeightMode::Uniform: return "uniform";
        case WeightMode::Frozen: return "frozen";
    }
    throw std::logic_error("unknown weight mode");
}

WeightMode weight_mode_from_string(const std::string & s) {
    if (s == "reward") return WeightMode::Reward;
    if (s == "uniform") return WeightMode::Uniform;
    if (s == "frozen") return WeightMode::Frozen;
    throw std::invalid_argument("config: unknown weight mode '" + s + "'");
}

nlohmann::json sd_config_to_json(const SDConfig & cfg) {
    return {{"enabled", cfg.enabled},
            {"rounds", cfg.rounds},
            {"branching", cfg.branching},
            {"draft_len", cfg.draft_len}};
}

SDConfig sd_config_from_json(const nlohmann::json & j) {
    SDConfig cfg;
    cfg.enabled = j.value("enabled", false);
    cfg.rounds = j.value("rounds", 1);
    cfg.branching = j.value("branching", 1);
    cfg.draft_len = j.value("draft_len", 1);
    return cfg;
}

namespace {

nlohmann::json timing_to_json(const TimingModel & tm) {
    auto role = [](const RoleTiming & r) {
        return nlohmann::json{{"unit_cost", r.unit_cost},
                              {"saturation_tokens", r.saturation_tokens},
                              {"latency_floor", r.latency_floor}};
    };
    return {{"target", role(tm.target)}, {"drafter", role(tm.drafter)}};
}

TimingModel timing_from_json(const nlohmann::json & j, const TimingModel & defaults) {
    auto role = [](const nlohmann::json & rj, const RoleTiming & d) {
        RoleTiming r;
        r.unit_cost = rj.value("unit_cost", d.unit_cost);
        r.saturation_tokens = rj.value("saturation_tokens", d.saturation_tokens);
        r.latency_floor = rj.value("latency_floor", d.latency_floor);
        return r;
    };
    TimingModel tm = defaults;
    if (j.contains("target")) tm.target = role(j.at("target"), defaults.target);
    if (j.contains("drafter")) tm.drafter = role(j.at("drafter"), defaults.drafter);
    return tm;
}

} // namespace

nlohmann::json ExperimentConfig::to_json() const {
    return {{"seed", seed},
            {"scenario", scenario},
            {"out_dir", out_dir},
            {"vocab_size", vocab_size},
            {"target_order", target_order},
            {"drafter_order", drafter_order},
            {"temperature", temperature},
            {"actor_init_scale", actor_init_scale},
            {"golden_a", reward_spec.golden_a},
            {"golden_b", reward_spec.golden_b},
            {"prompts", prompts},
            {"eos_biases", eos_biases},
            {"group_size", group_size},
            {"max_len", max_len},
            {"steps", steps},
            {"policy_lr", policy_lr},
            {"kd_interval", kd.interval},
            {"kd_weight_mode", to_string(kd.mode)},
            {"kd_clip_lo", kd.clip_lo},
            {"kd_clip_hi", kd.clip_hi},
            {"kd_lr", kd.lr},
            {"warmup_rounds", warmup_rounds},
            {"kd_step_cost", kd_step_cost},
            {"async_learner", async_learner},
            {"buffer_capacity", buffer_capacity},
            {"timing", timing_to_json(timing)},
            {"grid_rounds", grid_rounds},
            {"grid_branching", grid_branching},
            {"grid_draft_len", grid_draft_len},
            {"batch_sizes", batch_sizes},
            {"profile_cycles", profile_cycles},
            {"profile_requests", profile_requests},
            {"fixed_cfg", sd_config_to_json(fixed_cfg)},
            {"skew_requests", skew_requests},
            {"skew_max_len", skew_max_len}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json & j) {
    ExperimentConfig d; // defaults
    ExperimentConfig c;
    c.seed = j.value("seed", d.seed);
    c.scenario = j.value("scenario", d.scenario);
    c.out_dir = j.value("out_dir", d.out_dir);
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.target_order = j.value("target_order", d.target_order);
    c.drafter_order = j.value("drafter_order", d.drafter_order);
    c.temperature = j.value("temperature", d.temperature);
    c.actor_init_scale = j.value("actor_init_scale", d.actor_init_scale);
    c.reward_spec.golden_a = j.value("golden_a", d.reward_spec.golden_a);
    c.reward_spec.golden_b = j.value("golden_b", d.reward_spec.golden_b);
    c.prompts = j.value("prompts", d.prompts);
    c.eos_biases = j.value("eos_biases", d.eos_biases);
    c.group_size = j.value("group_size", d.group_size);
    c.max_len = j.value("max_len", d.max_len);
    c.steps = j.value("steps", d.steps);
    c.policy_lr = j.value("policy_lr", d.policy_lr);
    c.kd.interval = j.value("kd_interval", d.kd.interval);
    c.kd.mode = weight_mode_from_string(j.value("kd_weight_mode", to_string(d.kd.mode)));
    c.kd.clip_lo = j.value("kd_clip_lo", d.kd.clip_lo);
    c.kd.clip_hi = j.value("kd_clip_hi", d.kd.clip_hi);
    c.kd.lr = j.value("kd_lr", d.kd.lr);
    c.warmup_rounds = j.value("warmup_rounds", d.warmup_rounds);
    c.kd_step_cost = j.value("kd_step_cost", d.kd_step_cost);
    c.async_learner = j.value("async_learner", d.async_learner);
    c.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
    if (j.contains("timing")) {
        c.timing = timing_from_json(j.at("timing"), d.timing);
    }
    c.grid_rounds = j.value("grid_rounds", d.grid_rounds);
    c.grid_branching = j.value("grid_branching", d.grid_branching);
    c.grid_draft_len = j.value("grid_draft_len", d.grid_draft_len);
    c.batch_sizes = j.value("batch_sizes", d.batch_sizes);
    c.profile_cycles = j.value("profile_cycles", d.profile_cycles);
    c.profile_requests = j.value("profile_requests", d.profile_requests);
    if (j.contains("fixed_cfg")) {
        c.fixed_cfg = sd_config_from_json(j.at("fixed_cfg"));
    }
    c.skew_requests = j.value("skew_requests", d.skew_requests);
    c.skew_max_len = j.value("skew_max_len", d.skew_max_len);
    return c;
}

} // namespace respec
