#pragma once

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "respec/costsim.hpp"
#include "respec/model.hpp"
#include "respec/rng.hpp"

namespace respec {

// Speculative hyperparameters: s rounds per cycle, t candidate branches
// at each round's branch point, n drafted tokens per round and branch.
struct SDConfig {
    int rounds = 1;    // s
    int branching = 1; // t
    int draft_len = 1; // n
    bool enabled = false;

    static SDConfig off() { return SDConfig{}; }
    static SDConfig chain(int k) { return SDConfig{1, 1, k, true}; }
    static SDConfig tree(int s, int t, int n) { return SDConfig{s, t, n, true}; }

    int drafted_per_cycle() const { return rounds * branching * draft_len; }
    std::string key() const;

    bool operator==(const SDConfig & o) const {
        if (!enabled && !o.enabled) {
            return true;
        }
        return enabled == o.enabled && rounds == o.rounds &&
               branching == o.branching && draft_len == o.draft_len;
    }
};

// One emitted token with the alignment info the learner consumes.
struct StepRecord {
    int token = 0;
    std::vector<double> target_logprobs; // full log p(.|ctx) vector, bias included
    double logp = 0.0;                   // realized token's log p
    bool drafted = false;                // token originated from the drafter
    double logq = 0.0;                   // valid iff drafted
};

// One drafted position, with the prefix extension it was conditioned on
// (relative to the cycle-start context).
struct DraftPosRecord {
    std::vector<int> prefix_ext;
    int token = 0;
    double logq = 0.0;
    double logp = 0.0;
};

// Per-round forward accounting for one cycle of one sequence. The server
// aggregates these across the batch before charging the timing model.
struct RoundCost {
    int drafter_forwards = 0;    // sequential drafter passes this round
    int drafter_tokens_each = 0; // positions per drafter pass (= t branches)
    int target_tokens = 0;       // positions in the round's batched verify pass
};

struct VerifyOutcome {
    std::vector<int> accepted_tokens; // tokens emitted this cycle
    int accept_len = 0;               // drafted tokens accepted before first rejection
    int bonus_token = -1;             // replacement or bonus; -1 if cycle ended on accepted EOS
    std::vector<DraftPosRecord> draft_records;
    std::vector<StepRecord> steps;    // one per emitted token
    std::vector<RoundCost> rounds;
    bool ended = false;               // EOS emitted

    std::vector<std::pair<double, double>> draft_target_logprobs() const;
};

// Single-token acceptance probability min(1, p/q).
// q must be positive: the drafter cannot propose a zero-probability token.
double accept_prob(double p, double q);

// Residual distribution r(x) = max(0, p-q) / sum max(0, p-q).
// Throws "degenerate residual" when p == q within 1e-12 (rejection is
// impossible in that case, so callers never reach here).
CategoricalDist residual_dist(const CategoricalDist & p, const CategoricalDist & q);

// One chain verification cycle: draft k tokens, accept sequentially,
// replace from the residual on first rejection, bonus-sample from the
// target on full acceptance. stop_at_eos=false treats EOS as an ordinary
// token (used by fixed-batch profiling).
VerifyOutcome spec_step_chain(const TabularARModel & target, const TabularARModel & drafter,
                              const Context & ctx, int k, DecodeRng & rng,
                              double eos_bias = 0.0, bool stop_at_eos = true);

// One tree verification cycle: s rounds; each round drafts t independent
// candidate chains of n tokens and resolves the branch point by recursive
// rejection over the t siblings. Reduces exactly to spec_step_chain when
// t = 1 and s*n = k. max_emit caps the tokens emitted this cycle.
VerifyOutcome spec_step_tree(const TabularARModel & target, const TabularARModel & drafter,
                             const Context & ctx, const SDConfig & cfg, DecodeRng & rng,
                             double eos_bias = 0.0, bool stop_at_eos = true,
                             int max_emit = std::numeric_limits<int>::max());

struct GenerateResult {
    std::vector<int> tokens; // response only (prompt excluded)
    std::vector<StepRecord> steps;
    std::vector<int> accept_lens; // one entry per verification cycle
    CostLedger ledger;
    bool ended_eos = false;
};

// Full trajectory: repeats verification cycles (or naive single-token
// steps when cfg.enabled is false) until EOS or max_len.
GenerateResult generate(const TabularARModel & target, const TabularARModel & drafter,
                        const Context & prompt, const SDConfig & cfg, int max_len,
                        DecodeRng & rng, double eos_bias = 0.0, bool stop_at_eos = true);

// Arithmetic mean of accept_len over all recorded cycles; throws on empty.
double mean_accept_len(const std::vector<int> & accept_lens);

} // namespace respec
