#pragma once

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "respec/rollout.hpp"

namespace respec {

enum class WeightMode { Reward, Uniform, Frozen };

struct KDPolicy {
    int interval = 1; // update every I iterations, using 1/I of the buffer
    WeightMode mode = WeightMode::Reward;
    double clip_lo = 0.0;
    double clip_hi = 4.0;
    double lr = 0.1;
};

// Reward-based sample weight: normalize by the update batch's mean
// reward, then clip. Uniform mode returns 1.
double kd_weight(double r, const std::vector<double> & batch_rewards, const KDPolicy & policy);

// w * sum_t KL(p_tilde_t || q_theta(.|ctx_t)), with soft targets
// reconstructed from the sample's stored target log-probabilities and
// q_theta evaluated against the current drafter.
double kd_loss(const TabularARModel & drafter, const RolloutSample & sample, double w);

// Analytic drafter-logit gradient of sum_i w_i * L_KD(sample_i): per
// visited context row, w * (q_theta - p_tilde) / tau.
std::vector<double> kd_loss_gradient(
    const TabularARModel & drafter,
    const std::vector<std::pair<const RolloutSample *, double>> & weighted_samples);

struct ReplayBuffer {
    explicit ReplayBuffer(size_t capacity = 4096) : capacity_(capacity) {}

    void push(RolloutSample sample);
    std::vector<RolloutSample> take_all(); // moves entries out, leaves buffer empty
    size_t size() const { return entries_.size(); }
    size_t capacity() const { return capacity_; }

private:
    size_t capacity_;
    std::deque<RolloutSample> entries_;
};

struct KDUpdateResult {
    TabularARModel drafter;
    bool updated = false;
    double loss = 0.0;
    int samples_used = 0;
    double weight_mean = 0.0;
    double weight_min = 0.0;
    double weight_max = 0.0;
    double sim_time = 0.0;
};

// One interval update: selects a uniformly random ceil(N/I) subset of
// the buffer entries, accumulates the weighted KD loss, applies one
// gradient step, and reports the new snapshot. Empty buffer is a no-op.
KDUpdateResult kd_update(const TabularARModel & drafter, const std::vector<RolloutSample> & buffer,
                         const KDPolicy & policy, std::mt19937_64 & selection_rng,
                         double sim_cost_per_token);

// Versioned immutable drafter weights published to the engine.
struct DrafterSnapshot {
    std::shared_ptr<const TabularARModel> model;
    int version = 0;
};

struct LearnerMetrics {
    int update_idx = 0;
    int drafter_version = 0;
    double kd_loss = 0.0;
    int samples_used = 0;
    double weight_mean = 0.0;
    double weight_min = 0.0;
    double weight_max = 0.0;
    double weights_l2 = 0.0; // L2 norm of the published snapshot's logits
};

// The online learner. Samples flow in via feed(); every I-th iteration
// boundary triggers a kd_update that consumes the buffer and atomically
// publishes a new snapshot. In async mode the update runs on a worker
// thread and overlaps the trainer's non-generation work; the engine
// picks up the snapshot at the next rendezvous (await_pending), so async
// and synchronous modes produce identical drafter weight sequences given
// the same selection seed -- async changes timing, not semantics.
class OnlineLearner {
public:
    OnlineLearner(TabularARModel drafter, KDPolicy policy, uint64_t selection_seed,
                  double sim_cost_per_token, size_t buffer_capacity, bool async);
    ~OnlineLearner();

    OnlineLearner(const OnlineLearner &) = delete;
    OnlineLearner & operator=(const OnlineLearner &) = delete;

    void feed(std::vector<RolloutSample> samples);
    // iteration is 0-based; an update fires when (iteration+1) % I == 0.
    void on_iteration_boundary(int iteration);
    // Blocks until any in-flight update has published its snapshot.
    void await_pending();
    void shutdown(); // drains pending updates, no final partial update

    std::shared_ptr<const TabularARModel> snapshot() const;
    int drafter_version() const;
    double total_sim_time() const;
    size_t buffer_size() const { return buffer_.size(); }
    std::vector<LearnerMetrics> metrics() const;
    const KDPolicy & policy() const { return policy_; }

private:
    void worker_loop();
    void do_update(std::vector<RolloutSample> batch);

    KDPolicy policy_;
    std::mt19937_64 selection_rng_;
    double sim_cost_per_token_;
    ReplayBuffer buffer_;
    int update_idx_ = 0;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::shared_ptr<const TabularARModel> snapshot_;
    std::vector<LearnerMetrics> metrics_;
    double sim_time_ = 0.0;
    std::deque<std::vector<RolloutSample>> jobs_;
    bool busy_ = false;
    bool stopping_ = false;
    bool async_ = false;
    std::thread worker_;
};

} // namespace respec
