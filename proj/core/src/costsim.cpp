#include "respec/costsim.hpp"

#include <cmath>
#include <stdexcept>

namespace respec {

double TimingModel::forward_unit_cost(ModelRole role) const {
    const RoleTiming & t = for_role(role);
    return t.latency_floor + t.unit_cost * t.saturation_tokens;
}

double forward_time(const TimingModel & tm, ModelRole role, int total_tokens) {
    if (total_tokens < 1) {
        throw std::invalid_argument("forward_time: total_tokens must be >= 1");
    }
    const RoleTiming & t = tm.for_role(role);
    return t.latency_floor + t.unit_cost * static_cast<double>(std::max(total_tokens, t.saturation_tokens));
}

double ledger_time(const TimingModel & tm, const CostLedger & ledger) {
    double total = 0.0;
    for (const ForwardEvent & ev : ledger.events) {
        total += forward_time(tm, ev.role, ev.concurrent_batch_tokens);
    }
    return total;
}

double chi2_divergence(const CategoricalDist & p, const CategoricalDist & q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("chi2_divergence: size mismatch");
    }
    double acc = 0.0;
    for (int x = 0; x < p.size(); ++x) {
        if (p[x] == 0.0) {
            continue;
        }
        if (q[x] == 0.0) {
            throw std::invalid_argument("chi2_divergence: unbounded divergence (supp(p) not in supp(q))");
        }
        acc += p[x] * p[x] / q[x];
    }
    return acc - 1.0;
}

double accept_ratio_variance(const std::vector<std::pair<CategoricalDist, CategoricalDist>> & steps) {
    double prod = 1.0;
    for (const auto & [p, q] : steps) {
        prod *= 1.0 + chi2_divergence(p, q);
    }
    return prod - 1.0;
}

double expected_cost_per_token(double c_q, double c_p, double alpha, double r) {
    if (!(c_q > 0.0) || !(c_p > 0.0)) {
        throw std::invalid_argument("expected_cost_per_token: costs must be positive");
    }
    if (!(alpha >= 1.0)) {
        throw std::invalid_argument("expected_cost_per_token: alpha must be >= 1");
    }
    if (!(r > 0.0) || r > 1.0) {
        throw std::invalid_argument("expected_cost_per_token: r must be in (0, 1]");
    }
    return (c_q + c_p / alpha) / r;
}

} // namespace respec
