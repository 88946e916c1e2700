#pragma once

#include <string>
#include <vector>

#include "respec/model.hpp"

namespace respec {

enum class ModelRole { Target, Drafter };

// One simulated batched forward pass.
// positions_evaluated: new positions computed for a single sequence;
// concurrent_batch_tokens: total tokens sharing the forward across the
// whole active batch (what the timing model charges for).
struct ForwardEvent {
    ModelRole role;
    int positions_evaluated = 1;
    int concurrent_batch_tokens = 1;
};

struct CostLedger {
    std::vector<ForwardEvent> events;

    void add(ModelRole role, int positions, int batch_tokens) {
        events.push_back({role, positions, batch_tokens});
    }
    void append(const CostLedger & other) {
        events.insert(events.end(), other.events.begin(), other.events.end());
    }
    size_t size() const { return events.size(); }
};

// Saturating-linear forward time: below T_sat extra positions are free,
// above it they cost linearly. This is the minimal shape that makes SD
// speedups shrink as the batch grows.
struct RoleTiming {
    double unit_cost = 1.0;     // time per token past saturation
    int saturation_tokens = 32; // tokens processed at no marginal cost
    double latency_floor = 0.0; // fixed per-forward overhead
};

struct TimingModel {
    RoleTiming target{1.0, 32, 2.0};
    RoleTiming drafter{0.1, 32, 0.4};

    const RoleTiming & for_role(ModelRole role) const {
        return role == ModelRole::Target ? target : drafter;
    }
    // Cost of one full forward of a single position at batch 1, i.e. the
    // effective per-token cost of naive decoding in the unsaturated regime.
    double forward_unit_cost(ModelRole role) const;
};

double forward_time(const TimingModel & tm, ModelRole role, int total_tokens);
double ledger_time(const TimingModel & tm, const CostLedger & ledger);

// Chi-squared divergence sum_x p(x)^2 / q(x) - 1.
// Throws on q(x) = 0 with p(x) > 0 (unbounded divergence).
double chi2_divergence(const CategoricalDist & p, const CategoricalDist & q);

// Variance of the product acceptance ratio prod p/q for independent
// steps: prod_t (1 + chi2(p_t||q_t)) - 1.
double accept_ratio_variance(const std::vector<std::pair<CategoricalDist, CategoricalDist>> & steps);

// Expected cost per accepted token, (C_q + C_p/alpha) / r.
double expected_cost_per_token(double c_q, double c_p, double alpha, double r);

} // namespace respec
