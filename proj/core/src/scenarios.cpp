#include "respec/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "respec/learner.hpp"
#include "respec/verify.hpp"

namespace respec {

namespace {

constexpr uint64_t kWarmupStreamBase = 1u << 20; // keep warmup RNG streams clear of training steps
constexpr uint64_t kSkewStreamBase = 2u << 20;

double mean_of(const std::vector<double> & xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

} // namespace

Env make_env(const ExperimentConfig & cfg) {
    std::mt19937_64 init_rng(mix64(cfg.seed));
    Vocabulary vocab{cfg.vocab_size};
    TabularARModel actor = TabularARModel::random(vocab, cfg.target_order, cfg.temperature,
                                                  cfg.actor_init_scale, init_rng);
    TabularARModel drafter = TabularARModel::zeros(vocab, cfg.drafter_order, cfg.temperature);
    Task task = cfg.make_task();

    // Warm-up: uniform distillation on a few SD-off rollout batches so the
    // drafter tracks the initial actor before speculation starts.
    KDPolicy warmup_policy{1, WeightMode::Uniform, 0.0, 4.0, cfg.kd.lr};
    std::mt19937_64 sel_rng(mix64(cfg.seed ^ 0x77A9'5D1Eu));
    for (int w = 0; w < cfg.warmup_rounds; ++w) {
        auto requests =
            make_step_requests(task, cfg.seed, static_cast<int>(kWarmupStreamBase) + w);
        GenerationRun run = run_generation(std::move(requests), actor, nullptr, nullptr,
                                           cfg.timing, SDConfig::off(), actor.version());
        KDUpdateResult res = kd_update(drafter, run.samples, warmup_policy, sel_rng, 0.0);
        if (res.updated) {
            drafter = std::move(res.drafter);
        }
    }
    return Env{std::move(actor), std::move(drafter), std::move(task)};
}

ProfileTable build_profile(const ExperimentConfig & cfg, const TabularARModel & actor,
                           const TabularARModel & drafter) {
    ProfileOptions opts;
    opts.batch_sizes = cfg.batch_sizes;
    opts.cycles_per_request = cfg.profile_cycles;
    opts.num_requests = cfg.profile_requests;
    opts.seed = cfg.seed;
    Task task = cfg.make_task();
    return profile(actor, drafter, cfg.config_grid(), task.prompts, cfg.timing, opts);
}

const std::vector<std::string> & scenario_names() {
    static const std::vector<std::string> names{"baseline",   "naive-spec",     "respec",
                                                "frozen",     "uniform-kd",     "async-ablation",
                                                "skew-demo"};
    return names;
}

bool is_valid_scenario(const std::string & name) {
    const auto & names = scenario_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

namespace {

struct TrainRun {
    TrainResult result;
    std::vector<LearnerMetrics> learner;
    std::shared_ptr<const TabularARModel> final_drafter;
};

TrainRun run_training(const ExperimentConfig & cfg, const Env & env, SDTrainMode sd,
                      const ProfileTable * table, WeightMode kd_mode, int interval,
                      bool async) {
    std::unique_ptr<OnlineLearner> learner;
    if (sd != SDTrainMode::Off) {
        KDPolicy policy = cfg.kd;
        policy.mode = kd_mode;
        policy.interval = interval;
        learner = std::make_unique<OnlineLearner>(
            env.drafter, policy, mix64(cfg.seed ^ 0x1234'ABCDu), cfg.kd_step_cost,
            static_cast<size_t>(cfg.buffer_capacity), async);
    }
    TrainOptions opts;
    opts.steps = cfg.steps;
    opts.sd = sd;
    opts.fixed_cfg = cfg.fixed_cfg;
    opts.table = table;
    opts.policy_lr = cfg.policy_lr;
    opts.seed = cfg.seed;
    opts.count_learner_time = !async;

    TrainRun run{train_loop(env.actor, learner.get(), env.task, cfg.timing, opts), {}, nullptr};
    if (learner) {
        run.learner = learner->metrics();
        run.final_drafter = learner->snapshot();
        learner->shutdown();
    }
    return run;
}

nlohmann::json step_line(const StepMetrics & m) {
    return {{"step", m.step},
            {"mean_reward", m.mean_reward},
            {"mean_accept_len", m.mean_accept_len},
            {"sim_time", m.sim_time},
            {"actor_version", m.actor_version},
            {"drafter_version", m.drafter_version},
            {"cycles", m.cycles},
            {"switches", m.switches}};
}

nlohmann::json learner_line(const LearnerMetrics & m) {
    return {{"update", m.update_idx},
            {"drafter_version", m.drafter_version},
            {"kd_loss", m.kd_loss},
            {"samples", m.samples_used},
            {"weight_mean", m.weight_mean},
            {"weight_min", m.weight_min},
            {"weight_max", m.weight_max},
            {"weights_l2", m.weights_l2}};
}

nlohmann::json train_summary(const TrainRun & run) {
    const auto & ms = run.result.metrics;
    const size_t tail = std::min<size_t>(5, ms.size());
    std::vector<double> last_rewards;
    for (size_t i = ms.size() - tail; i < ms.size(); ++i) {
        last_rewards.push_back(ms[i].mean_reward);
    }
    nlohmann::json j{{"steps", ms.size()},
                     {"first_mean_reward", ms.front().mean_reward},
                     {"last_mean_reward", ms.back().mean_reward},
                     {"final_mean_reward", mean_of(last_rewards)},
                     {"reward_improvement", mean_of(last_rewards) - ms.front().mean_reward},
                     {"accept_len_first", ms.front().mean_accept_len},
                     {"accept_len_last", ms.back().mean_accept_len},
                     {"total_sim_time", run.result.total_sim_time},
                     {"learner_updates", run.learner.size()}};
    return j;
}

void append_step_lines(ScenarioResult & out, const TrainRun & run,
                       std::optional<int> interval = std::nullopt) {
    for (const auto & m : run.result.metrics) {
        nlohmann::json j = step_line(m);
        if (interval) {
            j["interval"] = *interval;
        }
        out.step_lines.push_back(std::move(j));
    }
    for (const auto & m : run.learner) {
        nlohmann::json j = learner_line(m);
        if (interval) {
            j["interval"] = *interval;
        }
        out.learner_lines.push_back(std::move(j));
    }
}

// Skewed workload: per-request EOS hazards from an exponential tail, so
// most sequences finish early while a few run to the length cap.
std::vector<RequestState> make_skew_requests(const ExperimentConfig & cfg, const Task & task) {
    std::mt19937_64 rng(mix64(cfg.seed ^ 0x5EED'CAFEu));
    std::exponential_distribution<double> tail(1.0);
    std::vector<RequestState> requests;
    for (int i = 0; i < cfg.skew_requests; ++i) {
        RequestState r;
        r.id = i;
        r.prompt = task.prompts[static_cast<size_t>(i) % task.prompts.size()];
        r.eos_bias = 2.5 - 2.2 * tail(rng);
        r.max_len = cfg.skew_max_len;
        r.rng = DecodeRng::from_seed(cfg.seed, kSkewStreamBase + static_cast<uint64_t>(i));
        requests.push_back(std::move(r));
    }
    return requests;
}

double skew_run_time(const ExperimentConfig & cfg, const Env & env, const ProfileTable * table,
                     SDConfig forced, GenerationRun * out = nullptr) {
    auto snapshot = std::make_shared<const TabularARModel>(env.drafter);
    GenerationRun run = run_generation(make_skew_requests(cfg, env.task), env.actor,
                                       [snapshot] { return snapshot; }, table, cfg.timing,
                                       forced, env.actor.version());
    const double t = run.total_time;
    if (out) {
        *out = std::move(run);
    }
    return t;
}

ScenarioResult scenario_skew_demo(const ExperimentConfig & cfg) {
    Env env = make_env(cfg);
    ProfileTable table = build_profile(cfg, env.actor, env.drafter);

    GenerationRun run;
    const double adaptive_time = skew_run_time(cfg, env, &table, SDConfig::off(), &run);

    bool nonincreasing = true;
    std::set<int> buckets;
    for (size_t i = 0; i < run.active_trace.size(); ++i) {
        buckets.insert(table.bucket_for(run.active_trace[i]));
        if (i > 0 && run.active_trace[i] > run.active_trace[i - 1]) {
            nonincreasing = false;
        }
    }

    // completion-length skew, measured against the length cap
    std::vector<int> lengths;
    int early = 0, late = 0;
    for (const auto & s : run.samples) {
        const int len = static_cast<int>(s.response.size());
        lengths.push_back(len);
        if (len <= cfg.skew_max_len / 3) {
            ++early;
        }
        if (len > 2 * cfg.skew_max_len / 3) {
            ++late;
        }
    }

    // fixed-config comparison over the same workload (Solver payoff)
    double best_fixed = std::numeric_limits<double>::infinity();
    double worst_fixed = 0.0;
    nlohmann::json fixed_times = nlohmann::json::object();
    for (const SDConfig & fixed : cfg.config_grid()) {
        const double t = skew_run_time(cfg, env, nullptr, fixed);
        fixed_times[fixed.key()] = t;
        best_fixed = std::min(best_fixed, t);
        worst_fixed = std::max(worst_fixed, t);
    }

    ScenarioResult out;
    out.scenario = cfg.scenario;
    out.table = table;
    for (const auto & sw : run.switches) {
        out.switch_lines.push_back({{"cycle", sw.cycle},
                                    {"active_batch", sw.active_batch},
                                    {"from", sw.from.key()},
                                    {"to", sw.to.key()}});
    }
    out.summary = {{"adaptive_time", adaptive_time},
                   {"best_fixed_time", best_fixed},
                   {"worst_fixed_time", worst_fixed},
                   {"fixed_times", fixed_times},
                   {"num_switches", run.switches.size()},
                   {"buckets_visited", buckets.size()},
                   {"active_trace_nonincreasing", nonincreasing},
                   {"active_trace", run.active_trace},
                   {"response_lengths", lengths},
                   {"frac_finished_first_third",
                    static_cast<double>(early) / static_cast<double>(run.samples.size())},
                   {"frac_survived_two_thirds",
                    static_cast<double>(late) / static_cast<double>(run.samples.size())}};
    return out;
}

ScenarioResult scenario_async_ablation(const ExperimentConfig & cfg) {
    Env env = make_env(cfg);
    ScenarioResult out;
    out.scenario = cfg.scenario;
    nlohmann::json per_interval = nlohmann::json::array();
    for (int interval : {1, 3, 5}) {
        TrainRun run = run_training(cfg, env, SDTrainMode::Fixed, nullptr, WeightMode::Reward,
                                    interval, cfg.async_learner);
        append_step_lines(out, run, interval);
        // average the tail to de-noise the per-step acceptance estimate
        const auto & ms = run.result.metrics;
        const size_t tail = std::min<size_t>(10, ms.size());
        std::vector<double> last;
        for (size_t i = ms.size() - tail; i < ms.size(); ++i) {
            last.push_back(ms[i].mean_accept_len);
        }
        per_interval.push_back({{"interval", interval},
                                {"final_accept_len", mean_of(last)},
                                {"accept_len_last_step", ms.back().mean_accept_len},
                                {"total_sim_time", run.result.total_sim_time},
                                {"learner_updates", run.learner.size()}});
    }
    out.summary = {{"per_interval", per_interval}};
    return out;
}

ScenarioResult scenario_train(const ExperimentConfig & cfg) {
    Env env = make_env(cfg);
    ScenarioResult out;
    out.scenario = cfg.scenario;

    SDTrainMode sd = SDTrainMode::Fixed;
    WeightMode kd_mode = WeightMode::Reward;
    const ProfileTable * table = nullptr;
    std::optional<ProfileTable> owned_table;

    if (cfg.scenario == "baseline") {
        sd = SDTrainMode::Off;
    } else if (cfg.scenario == "naive-spec" || cfg.scenario == "frozen") {
        kd_mode = WeightMode::Frozen;
    } else if (cfg.scenario == "uniform-kd") {
        kd_mode = WeightMode::Uniform;
    } else if (cfg.scenario == "respec") {
        sd = SDTrainMode::Adaptive;
        owned_table = build_profile(cfg, env.actor, env.drafter);
        table = &*owned_table;
        out.table = owned_table;
    } else {
        throw std::invalid_argument("unknown scenario '" + cfg.scenario + "'");
    }

    TrainRun run = run_training(cfg, env, sd, table, kd_mode, cfg.kd.interval, cfg.async_learner);
    append_step_lines(out, run);
    out.summary = train_summary(run);
    out.summary["scenario"] = cfg.scenario;
    return out;
}

} // namespace

ScenarioResult run_scenario(const ExperimentConfig & cfg) {
    if (!is_valid_scenario(cfg.scenario)) {
        throw std::invalid_argument("unknown scenario '" + cfg.scenario + "'");
    }
    if (cfg.scenario == "skew-demo") {
        return scenario_skew_demo(cfg);
    }
    if (cfg.scenario == "async-ablation") {
        return scenario_async_ablation(cfg);
    }
    ScenarioResult out = scenario_train(cfg);
    out.scenario = cfg.scenario;
    return out;
}

namespace {

void write_jsonl(const std::filesystem::path & path, const std::vector<nlohmann::json> & lines) {
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (const auto & j : lines) {
        f << j.dump() << "\n";
    }
}

} // namespace

void write_scenario_files(const ScenarioResult & result, const std::string & out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    write_jsonl(dir / "steps.jsonl", result.step_lines);
    write_jsonl(dir / "learner.jsonl", result.learner_lines);
    write_jsonl(dir / "switches.jsonl", result.switch_lines);

    std::ofstream summary(dir / "summary.json");
    if (!summary) {
        throw std::runtime_error("cannot write " + (dir / "summary.json").string());
    }
    summary << result.summary.dump(2) << "\n";

    if (result.table) {
        std::ofstream csv(dir / "profile.csv");
        csv << result.table->to_csv();
        std::ofstream js(dir / "profile.json");
        js << result.table->to_json().dump(2) << "\n";
    }
}

int cmd_profile(const ExperimentConfig & cfg) {
    Env env = make_env(cfg);
    ProfileTable table = build_profile(cfg, env.actor, env.drafter);

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    {
        std::ofstream csv(dir / "profile.csv");
        if (!csv) {
            std::cerr << "error: cannot write to " << cfg.out_dir << "\n";
            return 2;
        }
        csv << table.to_csv();
    }
    {
        std::ofstream js(dir / "profile.json");
        js << table.to_json().dump(2) << "\n";
    }
    std::cout << "profile: " << table.buckets().size() << " buckets -> " << cfg.out_dir << "\n";
    return 0;
}

int cmd_train(const ExperimentConfig & cfg) {
    if (!is_valid_scenario(cfg.scenario)) {
        std::cerr << "error: unknown scenario '" << cfg.scenario << "'\n";
        return 2;
    }
    ScenarioResult result = run_scenario(cfg);
    write_scenario_files(result, cfg.out_dir);
    std::cout << "scenario " << cfg.scenario << ": " << result.summary.dump() << "\n";
    return 0;
}

int cmd_verify(const ExperimentConfig & cfg) {
    VerifyReport report = run_verify(cfg.seed);
    std::cout << format_report(report);
    return report.all_pass ? 0 : 1;
}

} // namespace respec
