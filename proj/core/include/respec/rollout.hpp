#pragma once

#include <vector>

#include "respec/specdec.hpp"

namespace respec {

// One generated trajectory with the alignment info the learner needs:
// per-step full target log-probability vectors (soft-target source),
// drafter log-probabilities where drafted, and the scalar reward.
struct RolloutSample {
    std::vector<int> prompt;
    std::vector<int> response;
    std::vector<StepRecord> steps; // one per response token
    double eos_bias = 0.0;
    double reward = 0.0;
    int actor_version = 0;
    int drafter_version = 0;
};

} // namespace respec
