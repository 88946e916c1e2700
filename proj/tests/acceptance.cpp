// End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. All tolerances and measurement
// points are pinned here.
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "respec/learner.hpp"
#include "respec/scenarios.hpp"
#include "respec/verify.hpp"

using namespace respec;

namespace {

constexpr int kNumSeeds = 5;

int g_failures = 0;

void report(int idx, const std::string & name, bool pass, const std::string & detail) {
    std::cout << "criterion " << idx << " [" << name << "]: " << (pass ? "PASS" : "FAIL")
              << " -- " << detail << "\n";
    if (!pass) {
        ++g_failures;
    }
}

double mean_of(const std::vector<double> & xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_var(const std::vector<double> & xs) {
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) {
        s += (x - m) * (x - m);
    }
    return s / static_cast<double>(xs.size() - 1);
}

double tail_mean(const std::vector<StepMetrics> & ms, size_t tail,
                 double StepMetrics::* field) {
    const size_t n = std::min(tail, ms.size());
    double s = 0.0;
    for (size_t i = ms.size() - n; i < ms.size(); ++i) {
        s += ms[i].*field;
    }
    return s / static_cast<double>(n);
}

bool verify_pass(const VerifyReport & r, const std::string & name) {
    for (const auto & line : r.lines) {
        if (line.name == name) {
            return line.pass;
        }
    }
    return false;
}

struct FixedRun {
    TrainResult result;
    std::vector<LearnerMetrics> learner;
    std::vector<double> final_drafter_logits;
};

// Fixed-config speculative training with an online drafter learner,
// matching the scenario harness's seeding exactly.
FixedRun fixed_train(const ExperimentConfig & cfg, const Env & env, WeightMode mode,
                     int interval, bool async) {
    KDPolicy policy = cfg.kd;
    policy.mode = mode;
    policy.interval = interval;
    OnlineLearner learner(env.drafter, policy, mix64(cfg.seed ^ 0x1234'ABCDu), cfg.kd_step_cost,
                          static_cast<size_t>(cfg.buffer_capacity), async);
    TrainOptions opts;
    opts.steps = cfg.steps;
    opts.sd = SDTrainMode::Fixed;
    opts.fixed_cfg = cfg.fixed_cfg;
    opts.policy_lr = cfg.policy_lr;
    opts.seed = cfg.seed;
    opts.count_learner_time = !async;
    FixedRun run{train_loop(env.actor, &learner, env.task, cfg.timing, opts), {}, {}};
    run.learner = learner.metrics();
    run.final_drafter_logits = learner.snapshot()->logits();
    learner.shutdown();
    return run;
}

TrainResult baseline_train(const ExperimentConfig & cfg, const Env & env) {
    TrainOptions opts;
    opts.steps = cfg.steps;
    opts.sd = SDTrainMode::Off;
    opts.policy_lr = cfg.policy_lr;
    opts.seed = cfg.seed;
    return train_loop(env.actor, nullptr, env.task, cfg.timing, opts);
}

// --- criterion 3: analytic cost-per-accepted-token formula -----------------

void criterion_cost_formula() {
    const double worked = expected_cost_per_token(1.0, 10.0, 5.0, 0.8);
    const bool worked_ok = std::abs(worked - 3.75) < 1e-12;

    std::mt19937_64 mrng(31);
    TabularARModel target = TabularARModel::random(Vocabulary{6}, 2, 1.0, 0.8, mrng);
    TabularARModel drafter = TabularARModel::random(Vocabulary{6}, 1, 1.0, 0.8, mrng);
    TimingModel tm;
    const int k = 4;
    const int cycles = 200;
    Context ctx{{0}};
    DecodeRng rng = DecodeRng::from_seed(11, 0);
    CostLedger ledger;
    long accepted = 0;
    for (int c = 0; c < cycles; ++c) {
        VerifyOutcome out = spec_step_chain(target, drafter, ctx, k, rng, 0.0,
                                            /*stop_at_eos=*/false);
        for (int tok : out.accepted_tokens) {
            ctx.push(tok);
        }
        accepted += out.accept_len;
        for (const RoundCost & rc : out.rounds) {
            for (int f = 0; f < rc.drafter_forwards; ++f) {
                ledger.add(ModelRole::Drafter, rc.drafter_tokens_each, rc.drafter_tokens_each);
            }
            if (rc.target_tokens > 0) {
                ledger.add(ModelRole::Target, rc.target_tokens, rc.target_tokens);
            }
        }
    }
    const double measured = ledger_time(tm, ledger) / static_cast<double>(accepted);
    const double r_hat = static_cast<double>(accepted) / static_cast<double>(cycles * k);
    const double c_q = forward_time(tm, ModelRole::Drafter, 1);
    const double c_p = forward_time(tm, ModelRole::Target, 1);
    const double predicted = expected_cost_per_token(c_q, c_p, static_cast<double>(k), r_hat);
    const double rel = std::abs(measured - predicted) / predicted;

    std::ostringstream d;
    d << std::setprecision(6) << "measured=" << measured << " predicted=" << predicted
      << " rel_err=" << rel << " r_hat=" << r_hat << " worked=" << worked;
    report(3, "cost-formula-fidelity", worked_ok && rel <= 0.10, d.str());
}

// --- criterion 4: speedup-vs-batch trend ------------------------------------

void criterion_batch_trend() {
    ExperimentConfig cfg;
    cfg.seed = 1;
    Env env = make_env(cfg);
    ProfileTable table = build_profile(cfg, env.actor, env.drafter);

    bool monotone = true;
    int crossers = 0;
    double worst_uptick = 0.0;
    for (const SDConfig & c : cfg.config_grid()) {
        double prev = std::numeric_limits<double>::infinity();
        bool crossed = false;
        for (int b : table.buckets()) {
            const double sp = table.baseline(b) / table.entry(b, c);
            if (sp > prev + 1e-9) {
                monotone = false;
                worst_uptick = std::max(worst_uptick, sp - prev);
            }
            prev = sp;
            if (b >= 32 && sp < 1.0) {
                crossed = true;
            }
        }
        crossers += crossed ? 1 : 0;
    }
    std::ostringstream d;
    d << "monotone_nonincreasing=" << (monotone ? "yes" : "no")
      << " configs_below_1x_at_batch>=32=" << crossers << "/" << cfg.config_grid().size()
      << " worst_uptick=" << worst_uptick;
    report(4, "speedup-batch-trend", monotone && crossers >= 1, d.str());
}

// --- criterion 5: adaptive scheduler on the skewed workload -----------------

void criterion_scheduler() {
    bool ok = true;
    std::ostringstream d;
    d << std::setprecision(4);
    for (uint64_t seed = 1; seed <= kNumSeeds; ++seed) {
        ExperimentConfig cfg;
        cfg.seed = seed;
        cfg.scenario = "skew-demo";
        ScenarioResult r = run_scenario(cfg);
        const double adaptive = r.summary.at("adaptive_time").get<double>();
        const double best = r.summary.at("best_fixed_time").get<double>();
        const double worst = r.summary.at("worst_fixed_time").get<double>();
        const bool seed_ok = adaptive <= 1.05 * best && adaptive <= 0.9 * worst;
        ok = ok && seed_ok;
        d << " seed" << seed << ":adaptive/best=" << adaptive / best
          << ",adaptive/worst=" << adaptive / worst;
    }
    report(5, "adaptive-scheduler", ok, d.str());
}

// --- criterion 6: drafter staleness vs reward-weighted distillation ---------

void criterion_staleness() {
    std::vector<double> frozen_first, frozen_last, kd_last;
    for (uint64_t seed = 1; seed <= kNumSeeds; ++seed) {
        ExperimentConfig cfg;
        cfg.seed = seed;
        cfg.steps = 100;
        Env env = make_env(cfg);
        FixedRun frozen = fixed_train(cfg, env, WeightMode::Frozen, 1, cfg.async_learner);
        FixedRun kd = fixed_train(cfg, env, WeightMode::Reward, 1, cfg.async_learner);
        frozen_first.push_back(frozen.result.metrics.front().mean_accept_len);
        frozen_last.push_back(frozen.result.metrics.back().mean_accept_len);
        kd_last.push_back(kd.result.metrics.back().mean_accept_len);
    }
    const double ff = mean_of(frozen_first);
    const double fl = mean_of(frozen_last);
    const double kl = mean_of(kd_last);
    std::ostringstream d;
    d << std::setprecision(4) << "frozen_accept_len step1=" << ff << " step100=" << fl
      << "; reward-KD step100=" << kl << " (5-seed means)";
    report(6, "staleness-vs-online-kd", fl < ff && kl > fl, d.str());
}

// --- criterion 7: distributional neutrality ---------------------------------

bool chi_square_same(const std::map<std::vector<int>, std::pair<int, int>> & counts,
                     double level, double * stat_out, int * dof_out) {
    double n1 = 0, n2 = 0;
    for (const auto & [seq, c] : counts) {
        n1 += c.first;
        n2 += c.second;
    }
    double stat = 0.0;
    int bins = 0;
    double rest1 = 0, rest2 = 0;
    auto add_bin = [&](double o1, double o2) {
        const double tot = o1 + o2;
        const double e1 = n1 * tot / (n1 + n2);
        const double e2 = n2 * tot / (n1 + n2);
        stat += (o1 - e1) * (o1 - e1) / e1 + (o2 - e2) * (o2 - e2) / e2;
        ++bins;
    };
    for (const auto & [seq, c] : counts) {
        const double tot = c.first + c.second;
        if (std::min(n1, n2) * tot / (n1 + n2) < 5.0) {
            rest1 += c.first;
            rest2 += c.second;
        } else {
            add_bin(c.first, c.second);
        }
    }
    if (rest1 + rest2 > 0) {
        add_bin(rest1, rest2);
    }
    boost::math::chi_squared_distribution<double> dist(bins - 1);
    *stat_out = stat;
    *dof_out = bins - 1;
    return stat < boost::math::quantile(dist, level);
}

void criterion_neutrality(const std::vector<double> & off_final,
                          const std::vector<double> & on_final) {
    const double diff = mean_of(on_final) - mean_of(off_final);
    const double se = std::sqrt((sample_var(on_final) + sample_var(off_final)) /
                                static_cast<double>(kNumSeeds));
    const bool reward_ok = std::abs(diff) <= 2.0 * se;

    // trajectory-level test: SD-on and SD-off token streams from the same
    // model pair must be statistically indistinguishable
    std::mt19937_64 mrng(77);
    TabularARModel target = TabularARModel::random(Vocabulary{4}, 1, 1.0, 0.8, mrng);
    TabularARModel drafter = TabularARModel::random(Vocabulary{4}, 1, 1.0, 0.8, mrng);
    std::map<std::vector<int>, std::pair<int, int>> counts;
    const int n = 50000;
    for (uint64_t i = 0; i < n; ++i) {
        DecodeRng r1 = DecodeRng::from_seed(501, i);
        counts[generate(target, drafter, Context{{0}}, SDConfig::off(), 4, r1).tokens].first++;
        DecodeRng r2 = DecodeRng::from_seed(502, i);
        counts[generate(target, drafter, Context{{0}}, SDConfig::tree(2, 1, 2), 4, r2).tokens]
            .second++;
    }
    double stat = 0.0;
    int dof = 0;
    const bool chi_ok = chi_square_same(counts, 0.999, &stat, &dof);

    std::ostringstream d;
    d << std::setprecision(4) << "final reward diff=" << diff << " (2*pooled SE=" << 2.0 * se
      << "); trajectory chi2=" << stat << " dof=" << dof << " at alpha=0.001";
    report(7, "distributional-neutrality", reward_ok && chi_ok, d.str());
}

// --- criterion 8: update-interval ablation + async determinism --------------

void criterion_async_ablation() {
    std::map<int, std::vector<double>> finals;
    for (uint64_t seed = 1; seed <= kNumSeeds; ++seed) {
        ExperimentConfig cfg;
        cfg.seed = seed;
        // measured during the rapid-learning phase, where drafter staleness
        // dominates; later the actor converges and the intervals tie
        cfg.steps = 15;
        Env env = make_env(cfg);
        for (int interval : {1, 3, 5}) {
            FixedRun run = fixed_train(cfg, env, WeightMode::Reward, interval, true);
            finals[interval].push_back(
                tail_mean(run.result.metrics, 10, &StepMetrics::mean_accept_len));
        }
    }
    const double m1 = mean_of(finals[1]);
    const double m3 = mean_of(finals[3]);
    const double m5 = mean_of(finals[5]);
    const bool order_ok = m1 >= m3 && m3 >= m5;

    // paired determinism: overlapping the learner must not change the
    // published weight sequence
    ExperimentConfig cfg;
    cfg.seed = 1;
    cfg.steps = 10;
    Env env = make_env(cfg);
    FixedRun sync = fixed_train(cfg, env, WeightMode::Reward, 2, false);
    FixedRun async = fixed_train(cfg, env, WeightMode::Reward, 2, true);
    bool paired_ok = sync.learner.size() == async.learner.size() && !sync.learner.empty() &&
                     sync.final_drafter_logits == async.final_drafter_logits;
    if (paired_ok) {
        for (size_t i = 0; i < sync.learner.size(); ++i) {
            paired_ok = paired_ok && sync.learner[i].weights_l2 == async.learner[i].weights_l2;
        }
    }

    std::ostringstream d;
    d << std::setprecision(4) << "accept_len means I1=" << m1 << " I3=" << m3 << " I5=" << m5
      << "; sync/async weight sequences " << (paired_ok ? "identical" : "DIFFER");
    report(8, "interval-ablation-and-async-determinism", order_ok && paired_ok, d.str());
}

} // namespace

int main() {
    VerifyReport verify = run_verify(1);

    const bool c1 = verify_pass(verify, "chain-single-step-lossless") &&
                    verify_pass(verify, "chain-block-lossless") &&
                    verify_pass(verify, "tree-single-position-lossless") &&
                    verify_pass(verify, "mutated-acceptance-detected");
    report(1, "losslessness-oracles", c1,
           "closed-form single-step (1e-12), block and tree enumeration (TV 1e-9), "
           "mutation control");

    report(2, "acceptance-variance-identity",
           verify_pass(verify, "accept-ratio-variance-identity"),
           "product-chi-square identity vs brute force (1e-12), worked value 0.21");

    criterion_cost_formula();
    criterion_batch_trend();
    criterion_scheduler();
    criterion_staleness();

    // criteria 7 and 10 share the 5-seed 200-step training runs
    std::vector<double> off_final, on_final, improvements;
    for (uint64_t seed = 1; seed <= kNumSeeds; ++seed) {
        ExperimentConfig cfg;
        cfg.seed = seed;
        cfg.steps = 200;
        Env env = make_env(cfg);
        TrainResult off = baseline_train(cfg, env);
        FixedRun on = fixed_train(cfg, env, WeightMode::Reward, 1, cfg.async_learner);
        const double off_tail = tail_mean(off.metrics, 5, &StepMetrics::mean_reward);
        off_final.push_back(off_tail);
        on_final.push_back(tail_mean(on.result.metrics, 5, &StepMetrics::mean_reward));
        improvements.push_back(off_tail - off.metrics.front().mean_reward);
    }
    criterion_neutrality(off_final, on_final);
    criterion_async_ablation();

    const bool c9 = verify_pass(verify, "policy-gradient-fd") &&
                    verify_pass(verify, "kd-gradient-fd");
    report(9, "finite-difference-gradients", c9,
           "policy and distillation gradients vs central differences (1e-5, 50 instances each)");

    {
        const double mean_improvement = mean_of(improvements);
        std::ostringstream d;
        d << std::setprecision(4) << "baseline reward improvement over 200 steps: 5-seed mean="
          << mean_improvement << " (threshold 0.2)";
        report(10, "rl-learnability", mean_improvement >= 0.2, d.str());
    }

    if (g_failures > 0) {
        std::cout << g_failures << " criteria FAILED\n";
        return 1;
    }
    std::cout << "all 10 criteria passed\n";
    return 0;
}
