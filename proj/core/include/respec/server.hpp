#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "respec/costsim.hpp"
#include "respec/rollout.hpp"
#include "respec/specdec.hpp"

namespace respec {

// Offline profiling result: predicted time-per-output-token per
// (batch-size bucket, SD config), plus the per-bucket argmin. Buckets
// are power-of-two upper bounds; batches above the largest bucket clamp
// to it.
class ProfileTable {
public:
    ProfileTable() = default;
    explicit ProfileTable(std::vector<int> buckets);

    void set_entry(int bucket, const SDConfig & cfg, double time_per_token);
    // Computes best[bucket]; ties break toward fewer drafted tokens,
    // then non-spec. Throws if any bucket lacks the non-spec baseline.
    void finalize();

    int bucket_for(int active_batch) const;
    SDConfig solve(int active_batch) const;
    SDConfig best_for_bucket(int bucket) const;
    double entry(int bucket, const SDConfig & cfg) const;
    double baseline(int bucket) const { return entry(bucket, SDConfig::off()); }

    const std::vector<int> & buckets() const { return buckets_; }
    const std::vector<std::pair<SDConfig, double>> & entries_for(int bucket) const;

    nlohmann::json to_json() const;
    static ProfileTable from_json(const nlohmann::json & j);
    // Heatmap-friendly rows: batch,s,t,n,time_per_token,speedup.
    std::string to_csv() const;

private:
    std::vector<int> buckets_;
    std::map<int, std::vector<std::pair<SDConfig, double>>> entries_;
    std::map<int, SDConfig> best_;
};

struct ProfileOptions {
    std::vector<int> batch_sizes{1, 2, 4, 8, 16, 32, 64};
    int cycles_per_request = 64; // verification cycles measured per request
    int num_requests = 64;       // shared request pool, reused across batch sizes
    uint64_t seed = 1;
};

// Offline Solver: benchmarks every grid config (plus the implicit
// non-spec baseline) at each batch size under the simulated timing model
// and fills the table. Requests decode a fixed number of cycles with EOS
// treated as an ordinary token, so the batch stays exactly at its
// nominal size and per-request token streams are identical across batch
// sizes.
ProfileTable profile(const TabularARModel & target, const TabularARModel & drafter,
                     const std::vector<SDConfig> & config_grid,
                     const std::vector<Context> & eval_prompts,
                     const TimingModel & tm, const ProfileOptions & opts);

struct RequestState {
    int id = 0;
    Context prompt;
    std::vector<int> generated;
    double eos_bias = 0.0;
    int max_len = 1;
    bool spec_flag = false;
    bool done = false;
    DecodeRng rng;
    std::vector<StepRecord> steps;
    std::vector<int> accept_lens;

    Context full_ctx() const;
    int remaining() const { return max_len - static_cast<int>(generated.size()); }
};

struct SwitchEvent {
    int cycle = 0;
    int active_batch = 0;
    SDConfig from;
    SDConfig to;
};

using DrafterSnapshotFn = std::function<std::shared_ptr<const TabularARModel>()>;

// Cycle-synchronous batch engine with the two-state (spec / non-spec)
// machine. The Solver is re-consulted every cycle; a non-spec -> spec
// transition charges one drafter prefill over all active contexts (the
// KV-rebuild analogue), spec -> non-spec drops metadata at zero cost.
class BatchEngine {
public:
    // Adaptive mode: consults `table` each cycle. Fixed mode: pass
    // table = nullptr and a forced config (possibly non-spec).
    BatchEngine(const TabularARModel & target, DrafterSnapshotFn drafter,
                const ProfileTable * table, const TimingModel * tm,
                std::vector<RequestState> requests, SDConfig forced = SDConfig::off());

    void step(); // one engine cycle; throws on empty batch
    bool all_done() const;
    int active_batch() const;
    int cycles() const { return cycle_; }

    const CostLedger & ledger() const { return ledger_; }
    int prefill_events() const { return prefill_events_; }
    const std::vector<SwitchEvent> & switches() const { return switches_; }
    const std::vector<int> & active_trace() const { return active_trace_; }
    std::vector<RequestState> & requests() { return requests_; }
    int drafter_version_at_cycle(int cycle) const { return drafter_versions_.at(static_cast<size_t>(cycle)); }

private:
    const TabularARModel & target_;
    DrafterSnapshotFn drafter_;
    const ProfileTable * table_;
    const TimingModel * tm_;
    std::vector<RequestState> requests_;
    SDConfig mode_;
    bool mode_initialized_ = false;
    int cycle_ = 0;
    int prefill_events_ = 0;
    CostLedger ledger_;
    std::vector<SwitchEvent> switches_;
    std::vector<int> active_trace_;
    std::vector<int> drafter_versions_;
};

struct GenerationRun {
    std::vector<RolloutSample> samples;
    double total_time = 0.0;
    std::vector<int> accept_lens; // all cycles, all requests
    std::vector<SwitchEvent> switches;
    std::vector<int> active_trace;
    CostLedger ledger;
    int cycles = 0;
};

// Drives the engine until every request completes.
GenerationRun run_generation(std::vector<RequestState> requests,
                             const TabularARModel & target, DrafterSnapshotFn drafter,
                             const ProfileTable * table, const TimingModel & tm,
                             SDConfig forced = SDConfig::off(), int actor_version = 0);

} // namespace respec
