#include <numeric>
#include <stdexcept>

#include "respec/learner.hpp"
#include "respec/rl.hpp"

namespace respec {

TrainResult train_loop(TabularARModel actor, OnlineLearner * learner, const Task & task,
                       const TimingModel & tm, const TrainOptions & opts) {
    if (opts.sd == SDTrainMode::Adaptive && opts.table == nullptr) {
        throw std::invalid_argument("train_loop: adaptive mode needs a profile table");
    }
    if (opts.sd != SDTrainMode::Off && learner == nullptr) {
        throw std::invalid_argument("train_loop: spec decoding needs a drafter learner");
    }

    TrainResult result{{}, actor, 0.0};
    for (int step = 0; step < opts.steps; ++step) {
        std::shared_ptr<const TabularARModel> drafter;
        if (learner != nullptr) {
            learner->await_pending(); // rendezvous with any overlapped update
            drafter = learner->snapshot();
        }
        DrafterSnapshotFn drafter_fn;
        if (opts.sd != SDTrainMode::Off) {
            drafter_fn = [drafter] { return drafter; };
        }
        const SDConfig forced = (opts.sd == SDTrainMode::Fixed) ? opts.fixed_cfg : SDConfig::off();
        const ProfileTable * table = (opts.sd == SDTrainMode::Adaptive) ? opts.table : nullptr;

        GenerationRun run = run_generation(make_step_requests(task, opts.seed, step),
                                           result.actor, drafter_fn, table, tm, forced,
                                           result.actor.version());

        const int G = task.group_size;
        std::vector<std::pair<const RolloutSample *, double>> weighted;
        weighted.reserve(run.samples.size());
        double reward_sum = 0.0;
        for (size_t p = 0; p < task.prompts.size(); ++p) {
            std::vector<double> rewards(static_cast<size_t>(G));
            for (int g = 0; g < G; ++g) {
                RolloutSample & s = run.samples[p * static_cast<size_t>(G) + static_cast<size_t>(g)];
                s.reward = reward(s.response, task.reward_spec);
                s.drafter_version = drafter ? drafter->version() : -1;
                rewards[static_cast<size_t>(g)] = s.reward;
                reward_sum += s.reward;
            }
            const std::vector<double> adv = group_advantages(rewards);
            for (int g = 0; g < G; ++g) {
                weighted.emplace_back(&run.samples[p * static_cast<size_t>(G) + static_cast<size_t>(g)],
                                      adv[static_cast<size_t>(g)]);
            }
        }

        TabularARModel next_actor = policy_update(result.actor, weighted, opts.policy_lr);

        StepMetrics m;
        m.step = step;
        m.mean_reward = reward_sum / static_cast<double>(run.samples.size());
        m.mean_accept_len =
            run.accept_lens.empty()
                ? 0.0
                : std::accumulate(run.accept_lens.begin(), run.accept_lens.end(), 0.0) /
                      static_cast<double>(run.accept_lens.size());
        m.sim_time = run.total_time;
        m.actor_version = result.actor.version();
        m.drafter_version = drafter ? drafter->version() : -1;
        m.cycles = run.cycles;
        m.switches = static_cast<int>(run.switches.size());

        if (learner != nullptr) {
            const double before = learner->total_sim_time();
            learner->feed(std::move(run.samples));
            learner->on_iteration_boundary(step);
            if (opts.count_learner_time) {
                learner->await_pending();
                m.sim_time += learner->total_sim_time() - before;
            }
        }

        result.total_sim_time += m.sim_time;
        result.metrics.push_back(m);
        result.actor = std::move(next_actor);
    }
    if (learner != nullptr) {
        learner->await_pending();
    }
    return result;
}

} // namespace respec
