#include "respec/rl.hpp"

#include <cmath>
#include <stdexcept>

namespace respec {

double reward(const std::vector<int> & y, const RewardSpec & spec) {
    if (y.size() < 2) {
        return 0.0;
    }
    int matches = 0;
    for (size_t i = 0; i + 1 < y.size(); ++i) {
        if (y[i] == spec.golden_a && y[i + 1] == spec.golden_b) {
            ++matches;
        }
    }
    return static_cast<double>(matches) / static_cast<double>(y.size() - 1);
}

std::vector<double> group_advantages(const std::vector<double> & rewards) {
    const size_t g = rewards.size();
    if (g < 2) {
        throw std::invalid_argument("group_advantages: group size must be >= 2");
    }
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
    }
    const double std_dev = std::sqrt(var / static_cast<double>(g));
    std::vector<double> adv(g);
    for (size_t i = 0; i < g; ++i) {
        adv[i] = (rewards[i] - mean) / (std_dev + 1e-6);
    }
    return adv;
}

double policy_objective(const TabularARModel & actor,
                        const std::vector<std::pair<const RolloutSample *, double>> & samples) {
    double obj = 0.0;
    for (const auto & [sample, adv] : samples) {
        Context ctx{sample->prompt};
        for (int tok : sample->response) {
            obj += adv * actor.logprob(ctx, tok, sample->eos_bias);
            ctx.push(tok);
        }
    }
    return obj;
}

std::vector<double> policy_objective_gradient(
    const TabularARModel & actor,
    const std::vector<std::pair<const RolloutSample *, double>> & samples) {
    const size_t V = static_cast<size_t>(actor.vocab().size);
    std::vector<double> grad(actor.logits().size(), 0.0);
    const double inv_tau = 1.0 / actor.temperature();
    for (const auto & [sample, adv] : samples) {
        Context ctx{sample->prompt};
        for (int tok : sample->response) {
            const size_t row = actor.row_index(ctx);
            CategoricalDist pi = actor.next_dist(ctx, sample->eos_bias);
            for (size_t x = 0; x < V; ++x) {
                grad[row * V + x] -= adv * pi.probs[x] * inv_tau;
            }
            grad[row * V + static_cast<size_t>(tok)] += adv * inv_tau;
            ctx.push(tok);
        }
    }
    return grad;
}

TabularARModel policy_update(const TabularARModel & actor,
                             const std::vector<std::pair<const RolloutSample *, double>> & samples,
                             double lr) {
    for (const auto & [sample, adv] : samples) {
        if (sample->actor_version != actor.version()) {
            throw std::invalid_argument("policy_update: off-policy update");
        }
    }
    std::vector<double> grad = policy_objective_gradient(actor, samples);
    for (double & g : grad) {
        g *= lr;
    }
    return actor.with_logits_delta(grad);
}

std::vector<RequestState> make_step_requests(const Task & task, uint64_t seed, int step) {
    if (task.prompts.size() != task.eos_biases.size()) {
        throw std::invalid_argument("make_step_requests: prompts/eos_biases length mismatch");
    }
    std::vector<RequestState> requests;
    int idx = 0;
    for (size_t p = 0; p < task.prompts.size(); ++p) {
        for (int g = 0; g < task.group_size; ++g, ++idx) {
            RequestState r;
            r.id = idx;
            r.prompt = task.prompts[p];
            r.eos_bias = task.eos_biases[p];
            r.max_len = task.max_len;
            const uint64_t stream = (static_cast<uint64_t>(step) << 24) | static_cast<uint64_t>(idx);
            r.rng = DecodeRng::from_seed(seed, stream);
            requests.push_back(std::move(r));
        }
    }
    return requests;
}

} // namespace respec
