#pragma once

#include <vector>

#include "respec/rollout.hpp"
#include "respec/server.hpp"

namespace respec {

// Programmatic reward: fraction of adjacent token pairs matching the
// golden bigram, count(a,b) / max(1, |y|-1). Always in [0, 1].
struct RewardSpec {
    int golden_a = 1;
    int golden_b = 2;
};

double reward(const std::vector<int> & y, const RewardSpec & spec);

// Group-relative advantages A_i = (r_i - mean) / (std + 1e-6), with the
// population standard deviation over the group. Requires G >= 2.
std::vector<double> group_advantages(const std::vector<double> & rewards);

struct Task {
    std::vector<Context> prompts;
    std::vector<double> eos_biases; // per-prompt EOS-logit hazard
    RewardSpec reward_spec;
    int group_size = 8;
    int max_len = 24;
};

// Policy-gradient objective sum_i A_i sum_t log pi(y_t | ctx_t) and its
// gradient over the actor logits table. Per-step row gradient for a
// tabular softmax is A * (onehot(y_t) - pi) / tau.
double policy_objective(const TabularARModel & actor,
                        const std::vector<std::pair<const RolloutSample *, double>> & samples);
std::vector<double> policy_objective_gradient(
    const TabularARModel & actor,
    const std::vector<std::pair<const RolloutSample *, double>> & samples);

// One gradient-ascent step; returns a new model with version+1.
// Throws "off-policy update" on actor_version mismatch.
TabularARModel policy_update(const TabularARModel & actor,
                             const std::vector<std::pair<const RolloutSample *, double>> & samples,
                             double lr);

// Builds the per-step request set: group_size completions per prompt,
// each with its own RNG stream derived from (seed, step, index).
std::vector<RequestState> make_step_requests(const Task & task, uint64_t seed, int step);

class OnlineLearner; // learner.hpp

enum class SDTrainMode { Off, Fixed, Adaptive };

struct TrainOptions {
    int steps = 200;
    SDTrainMode sd = SDTrainMode::Off;
    SDConfig fixed_cfg = SDConfig::off();      // used when sd == Fixed
    const ProfileTable * table = nullptr;      // used when sd == Adaptive
    double policy_lr = 0.2;
    uint64_t seed = 1;
    // Synchronous accounting adds each learner update's simulated time to
    // the training step; asynchronous accounting overlaps it (free).
    bool count_learner_time = false;
};

struct StepMetrics {
    int step = 0;
    double mean_reward = 0.0;
    double mean_accept_len = 0.0; // 0 when no spec cycles ran this step
    double sim_time = 0.0;        // this step's simulated wall time
    int actor_version = 0;
    int drafter_version = -1; // snapshot used for generation, -1 if no drafter
    int cycles = 0;
    int switches = 0;
};

struct TrainResult {
    std::vector<StepMetrics> metrics;
    TabularARModel actor;
    double total_sim_time = 0.0;
};

// The RL loop: generate one group per prompt via the batch engine, score,
// compute group-relative advantages, take one policy step, and hand the
// rollouts to the learner (if any) at the iteration boundary.
TrainResult train_loop(TabularARModel actor, OnlineLearner * learner, const Task & task,
                       const TimingModel & tm, const TrainOptions & opts);

} // namespace respec
