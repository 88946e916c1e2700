#include "respec/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace respec {

double kd_weight(double r, const std::vector<double> & batch_rewards, const KDPolicy & policy) {
    switch (policy.mode) {
        case WeightMode::Uniform:
            return 1.0;
        case WeightMode::Frozen:
            throw std::logic_error("kd_weight: frozen drafter takes no updates");
        case WeightMode::Reward:
            break;
    }
    if (batch_rewards.empty()) {
        throw std::invalid_argument("kd_weight: empty batch");
    }
    const double mean =
        std::accumulate(batch_rewards.begin(), batch_rewards.end(), 0.0) /
        static_cast<double>(batch_rewards.size());
    const double w = r / std::max(1e-6, mean);
    return std::clamp(w, policy.clip_lo, policy.clip_hi);
}

namespace {

// Soft targets come from the stored per-step target log-prob vectors, so
// the loss stays well-defined after the actor has moved on.
double sample_kl_sum(const TabularARModel & drafter, const RolloutSample & sample) {
    if (sample.steps.size() != sample.response.size()) {
        throw std::invalid_argument("kd_loss: steps/response length mismatch");
    }
    double total = 0.0;
    Context ctx{sample.prompt};
    for (size_t t = 0; t < sample.response.size(); ++t) {
        const std::vector<double> & logp = sample.steps[t].target_logprobs;
        const std::vector<double> logq = drafter.next_logprobs(ctx, sample.eos_bias);
        if (logp.size() != logq.size()) {
            throw std::invalid_argument("kd_loss: vocab size mismatch");
        }
        for (size_t x = 0; x < logp.size(); ++x) {
            if (std::isinf(logp[x])) {
                continue; // p=0 contributes nothing
            }
            total += std::exp(logp[x]) * (logp[x] - logq[x]);
        }
        ctx.push(sample.response[t]);
    }
    return total;
}

} // namespace

double kd_loss(const TabularARModel & drafter, const RolloutSample & sample, double w) {
    return w * sample_kl_sum(drafter, sample);
}

std::vector<double> kd_loss_gradient(
    const TabularARModel & drafter,
    const std::vector<std::pair<const RolloutSample *, double>> & weighted_samples) {
    const size_t V = static_cast<size_t>(drafter.vocab().size);
    std::vector<double> grad(drafter.logits().size(), 0.0);
    const double inv_tau = 1.0 / drafter.temperature();
    for (const auto & [sample, w] : weighted_samples) {
        Context ctx{sample->prompt};
        for (size_t t = 0; t < sample->response.size(); ++t) {
            const size_t row = drafter.row_index(ctx);
            const CategoricalDist q = drafter.next_dist(ctx, sample->eos_bias);
            const std::vector<double> & logp = sample->steps[t].target_logprobs;
            for (size_t x = 0; x < V; ++x) {
                const double p = std::isinf(logp[x]) ? 0.0 : std::exp(logp[x]);
                grad[row * V + x] += w * (q.probs[x] - p) * inv_tau;
            }
            ctx.push(sample->response[t]);
        }
    }
    return grad;
}

void ReplayBuffer::push(RolloutSample sample) {
    if (entries_.size() == capacity_) {
        entries_.pop_front();
    }
    entries_.push_back(std::move(sample));
}

std::vector<RolloutSample> ReplayBuffer::take_all() {
    std::vector<RolloutSample> out(std::make_move_iterator(entries_.begin()),
                                   std::make_move_iterator(entries_.end()));
    entries_.clear();
    return out;
}

KDUpdateResult kd_update(const TabularARModel & drafter, const std::vector<RolloutSample> & buffer,
                         const KDPolicy & policy, std::mt19937_64 & selection_rng,
                         double sim_cost_per_token) {
    if (policy.mode == WeightMode::Frozen) {
        throw std::logic_error("kd_update: frozen drafter takes no updates");
    }
    if (policy.interval < 1) {
        throw std::invalid_argument("kd_update: interval must be >= 1");
    }
    if (buffer.empty()) {
        return {drafter, false, 0.0, 0, 0.0, 0.0, 0.0, 0.0};
    }

    const size_t n = buffer.size();
    const size_t take =
        (n + static_cast<size_t>(policy.interval) - 1) / static_cast<size_t>(policy.interval);
    // Partial Fisher-Yates; unbiased modulo fold is fine at these sizes
    // and keeps the draw order platform-independent.
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    for (size_t i = 0; i < take; ++i) {
        const size_t j = i + static_cast<size_t>(selection_rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }

    std::vector<double> batch_rewards(take);
    for (size_t i = 0; i < take; ++i) {
        batch_rewards[i] = buffer[idx[i]].reward;
    }

    std::vector<std::pair<const RolloutSample *, double>> weighted;
    weighted.reserve(take);
    double w_sum = 0.0, w_min = 0.0, w_max = 0.0;
    size_t distilled_tokens = 0;
    for (size_t i = 0; i < take; ++i) {
        const RolloutSample & s = buffer[idx[i]];
        const double w = kd_weight(s.reward, batch_rewards, policy);
        weighted.emplace_back(&s, w);
        w_sum += w;
        w_min = (i == 0) ? w : std::min(w_min, w);
        w_max = (i == 0) ? w : std::max(w_max, w);
        distilled_tokens += s.response.size();
    }

    double loss = 0.0;
    for (const auto & [s, w] : weighted) {
        loss += kd_loss(drafter, *s, w);
    }
    std::vector<double> grad = kd_loss_gradient(drafter, weighted);
    for (double & g : grad) {
        g *= -policy.lr; // descent on the KD loss
    }

    KDUpdateResult result{drafter.with_logits_delta(grad),
                          true,
                          loss,
                          static_cast<int>(take),
                          w_sum / static_cast<double>(take),
                          w_min,
                          w_max,
                          sim_cost_per_token * static_cast<double>(distilled_tokens)};
    return result;
}

OnlineLearner::OnlineLearner(TabularARModel drafter, KDPolicy policy, uint64_t selection_seed,
                             double sim_cost_per_token, size_t buffer_capacity, bool async)
    : policy_(policy),
      selection_rng_(selection_seed),
      sim_cost_per_token_(sim_cost_per_token),
      buffer_(buffer_capacity),
      snapshot_(std::make_shared<const TabularARModel>(std::move(drafter))),
      async_(async) {
    if (async_) {
        worker_ = std::thread(&OnlineLearner::worker_loop, this);
    }
}

OnlineLearner::~OnlineLearner() {
    shutdown();
}

void OnlineLearner::feed(std::vector<RolloutSample> samples) {
    for (auto & s : samples) {
        buffer_.push(std::move(s));
    }
}

void OnlineLearner::on_iteration_boundary(int iteration) {
    if (policy_.mode == WeightMode::Frozen) {
        return;
    }
    if ((iteration + 1) % policy_.interval != 0) {
        return;
    }
    std::vector<RolloutSample> batch = buffer_.take_all();
    if (batch.empty()) {
        return;
    }
    if (!async_) {
        do_update(std::move(batch));
        return;
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        jobs_.push_back(std::move(batch));
    }
    cv_.notify_all();
}

void OnlineLearner::await_pending() {
    if (!async_) {
        return;
    }
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return jobs_.empty() && !busy_; });
}

void OnlineLearner::shutdown() {
    if (async_ && worker_.joinable()) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stopping_ = true;
        }
        cv_.notify_all();
        worker_.join();
    }
}

std::shared_ptr<const TabularARModel> OnlineLearner::snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    return snapshot_;
}

int OnlineLearner::drafter_version() const {
    std::lock_guard<std::mutex> lock(mu_);
    return snapshot_->version();
}

double OnlineLearner::total_sim_time() const {
    std::lock_guard<std::mutex> lock(mu_);
    return sim_time_;
}

std::vector<LearnerMetrics> OnlineLearner::metrics() const {
    std::lock_guard<std::mutex> lock(mu_);
    return metrics_;
}

void OnlineLearner::worker_loop() {
    for (;;) {
        std::vector<RolloutSample> batch;
        {
            std::unique_lock<std::mutex> lock(mu_);
            cv_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
            if (jobs_.empty()) {
                return; // stopping with the queue drained
            }
            batch = std::move(jobs_.front());
            jobs_.pop_front();
            busy_ = true;
        }
        do_update(std::move(batch));
        {
            std::lock_guard<std::mutex> lock(mu_);
            busy_ = false;
        }
        cv_.notify_all();
    }
}

void OnlineLearner::do_update(std::vector<RolloutSample> batch) {
    std::shared_ptr<const TabularARModel> base;
    {
        std::lock_guard<std::mutex> lock(mu_);
        base = snapshot_;
    }
    KDUpdateResult res =
        kd_update(*base, batch, policy_, selection_rng_, sim_cost_per_token_);
    if (!res.updated) {
        return;
    }
    double l2 = 0.0;
    for (double w : res.drafter.logits()) {
        l2 += w * w;
    }
    l2 = std::sqrt(l2);
    std::lock_guard<std::mutex> lock(mu_);
    snapshot_ = std::make_shared<const TabularARModel>(std::move(res.drafter));
    sim_time_ += res.sim_time;
    metrics_.push_back({update_idx_++, snapshot_->version(), res.loss, res.samples_used,
                        res.weight_mean, res.weight_min, res.weight_max, l2});
}

} // namespace respec
