#include "respec/server.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace respec {

ProfileTable::ProfileTable(std::vector<int> buckets) : buckets_(std::move(buckets)) {
    if (buckets_.empty()) {
        throw std::invalid_argument("ProfileTable: no buckets");
    }
    std::sort(buckets_.begin(), buckets_.end());
}

void ProfileTable::set_entry(int bucket, const SDConfig & cfg, double time_per_token) {
    entries_[bucket].emplace_back(cfg, time_per_token);
}

void ProfileTable::finalize() {
    best_.clear();
    for (int bucket : buckets_) {
        auto it = entries_.find(bucket);
        if (it == entries_.end()) {
            throw std::invalid_argument("ProfileTable: bucket has no entries");
        }
        bool has_baseline = false;
        const SDConfig * best_cfg = nullptr;
        double best_tpt = 0.0;
        for (const auto & [cfg, tpt] : it->second) {
            if (!cfg.enabled) {
                has_baseline = true;
            }
            bool better = false;
            if (best_cfg == nullptr || tpt < best_tpt) {
                better = true;
            } else if (tpt == best_tpt) {
                // ties: fewer drafted tokens, then non-spec
                const int cur = cfg.enabled ? cfg.drafted_per_cycle() : 0;
                const int old = best_cfg->enabled ? best_cfg->drafted_per_cycle() : 0;
                better = cur < old || (cur == old && !cfg.enabled && best_cfg->enabled);
            }
            if (better) {
                best_cfg = &cfg;
                best_tpt = tpt;
            }
        }
        if (!has_baseline) {
            throw std::invalid_argument("ProfileTable: bucket missing non-spec baseline");
        }
        best_[bucket] = *best_cfg;
    }
}

int ProfileTable::bucket_for(int active_batch) const {
    if (active_batch < 1) {
        throw std::invalid_argument("bucket_for: batch must be >= 1");
    }
    for (int b : buckets_) {
        if (active_batch <= b) {
            return b;
        }
    }
    return buckets_.back(); // clamp above the profiled range
}

SDConfig ProfileTable::solve(int active_batch) const {
    return best_for_bucket(bucket_for(active_batch));
}

SDConfig ProfileTable::best_for_bucket(int bucket) const {
    auto it = best_.find(bucket);
    if (it == best_.end()) {
        throw std::invalid_argument("ProfileTable: table not finalized or unknown bucket");
    }
    return it->second;
}

double ProfileTable::entry(int bucket, const SDConfig & cfg) const {
    const auto & vec = entries_for(bucket);
    for (const auto & [c, tpt] : vec) {
        if (c == cfg) {
            return tpt;
        }
    }
    throw std::invalid_argument("ProfileTable: no entry for config " + cfg.key());
}

const std::vector<std::pair<SDConfig, double>> & ProfileTable::entries_for(int bucket) const {
    auto it = entries_.find(bucket);
    if (it == entries_.end()) {
        throw std::invalid_argument("ProfileTable: unknown bucket");
    }
    return it->second;
}

nlohmann::json ProfileTable::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (int bucket : buckets_) {
        for (const auto & [cfg, tpt] : entries_.at(bucket)) {
            entries.push_back({{"bucket", bucket},
                               {"s", cfg.rounds},
                               {"t", cfg.branching},
                               {"n", cfg.draft_len},
                               {"enabled", cfg.enabled},
                               {"time_per_token", tpt}});
        }
    }
    nlohmann::json best = nlohmann::json::array();
    for (const auto & [bucket, cfg] : best_) {
        best.push_back({{"bucket", bucket},
                        {"s", cfg.rounds},
                        {"t", cfg.branching},
                        {"n", cfg.draft_len},
                        {"enabled", cfg.enabled}});
    }
    return nlohmann::json{{"buckets", buckets_}, {"entries", entries}, {"best", best}};
}

ProfileTable ProfileTable::from_json(const nlohmann::json & j) {
    ProfileTable t(j.at("buckets").get<std::vector<int>>());
    for (const auto & e : j.at("entries")) {
        SDConfig cfg{e.at("s").get<int>(), e.at("t").get<int>(), e.at("n").get<int>(),
                     e.at("enabled").get<bool>()};
        t.set_entry(e.at("bucket").get<int>(), cfg, e.at("time_per_token").get<double>());
    }
    t.finalize();
    return t;
}

std::string ProfileTable::to_csv() const {
    std::string out = "batch,s,t,n,time_per_token,speedup\n";
    char buf[128];
    for (int bucket : buckets_) {
        const double base = baseline(bucket);
        for (const auto & [cfg, tpt] : entries_.at(bucket)) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.12g,%.12g\n", bucket,
                          cfg.enabled ? cfg.rounds : 0, cfg.enabled ? cfg.branching : 0,
                          cfg.enabled ? cfg.draft_len : 0, tpt, base / tpt);
            out += buf;
        }
    }
    return out;
}

namespace {

// Merges the per-request round costs of one batched cycle into shared
// forward events. The batch runs in lockstep: round r executes as long
// as any request is still in its cycle, and every executed forward
// occupies the full batch width (requests whose cycle already ended pad
// the batch rather than freeing compute).
void charge_batched_cycle(CostLedger & ledger, const std::vector<VerifyOutcome> & outcomes) {
    const int width = static_cast<int>(outcomes.size());
    size_t max_rounds = 0;
    for (const auto & o : outcomes) {
        max_rounds = std::max(max_rounds, o.rounds.size());
    }
    for (size_t r = 0; r < max_rounds; ++r) {
        int max_forwards = 0;
        int tokens_each = 0;
        int max_target = 0;
        for (const auto & o : outcomes) {
            if (o.rounds.size() > r) {
                max_forwards = std::max(max_forwards, o.rounds[r].drafter_forwards);
                tokens_each = std::max(tokens_each, o.rounds[r].drafter_tokens_each);
                max_target = std::max(max_target, o.rounds[r].target_tokens);
            }
        }
        for (int f = 0; f < max_forwards; ++f) {
            ledger.add(ModelRole::Drafter, width * tokens_each, width * tokens_each);
        }
        if (max_target > 0) {
            ledger.add(ModelRole::Target, width * max_target, width * max_target);
        }
    }
}

} // namespace

ProfileTable profile(const TabularARModel & target, const TabularARModel & drafter,
                     const std::vector<SDConfig> & config_grid,
                     const std::vector<Context> & eval_prompts,
                     const TimingModel & tm, const ProfileOptions & opts) {
    if (eval_prompts.empty()) {
        throw std::invalid_argument("profile: no eval prompts");
    }
    ProfileTable table(opts.batch_sizes);

    std::vector<SDConfig> configs;
    configs.push_back(SDConfig::off());
    configs.insert(configs.end(), config_grid.begin(), config_grid.end());

    for (int batch : opts.batch_sizes) {
        for (const SDConfig & cfg : configs) {
            CostLedger ledger;
            long total_tokens = 0;
            for (int base = 0; base < opts.num_requests; base += batch) {
                // one wave of exactly `batch` requests
                std::vector<Context> ctxs;
                std::vector<DecodeRng> rngs;
                for (int i = 0; i < batch; ++i) {
                    const int rid = base + i;
                    ctxs.push_back(eval_prompts[static_cast<size_t>(rid) % eval_prompts.size()]);
                    rngs.push_back(DecodeRng::from_seed(opts.seed, static_cast<uint64_t>(rid)));
                }
                for (int c = 0; c < opts.cycles_per_request; ++c) {
                    if (cfg.enabled) {
                        std::vector<VerifyOutcome> outcomes;
                        outcomes.reserve(static_cast<size_t>(batch));
                        for (int i = 0; i < batch; ++i) {
                            VerifyOutcome out = spec_step_tree(
                                target, drafter, ctxs[static_cast<size_t>(i)], cfg,
                                rngs[static_cast<size_t>(i)], 0.0, /*stop_at_eos=*/false);
                            for (int tok : out.accepted_tokens) {
                                ctxs[static_cast<size_t>(i)].push(tok);
                            }
                            total_tokens += static_cast<long>(out.accepted_tokens.size());
                            outcomes.push_back(std::move(out));
                        }
                        charge_batched_cycle(ledger, outcomes);
                    } else {
                        for (int i = 0; i < batch; ++i) {
                            CategoricalDist pd = target.next_dist(ctxs[static_cast<size_t>(i)]);
                            int tok = sample_from(pd, rngs[static_cast<size_t>(i)].draft_uniform());
                            ctxs[static_cast<size_t>(i)].push(tok);
                            ++total_tokens;
                        }
                        ledger.add(ModelRole::Target, batch, batch);
                    }
                }
            }
            table.set_entry(batch, cfg, ledger_time(tm, ledger) / static_cast<double>(total_tokens));
        }
    }
    table.finalize();
    return table;
}

Context RequestState::full_ctx() const {
    Context c = prompt;
    c.tokens.insert(c.tokens.end(), generated.begin(), generated.end());
    return c;
}

BatchEngine::BatchEngine(const TabularARModel & target, DrafterSnapshotFn drafter,
                         const ProfileTable * table, const TimingModel * tm,
                         std::vector<RequestState> requests, SDConfig forced)
    : target_(target), drafter_(std::move(drafter)), table_(table), tm_(tm),
      requests_(std::move(requests)), mode_(forced) {}

bool BatchEngine::all_done() const {
    return std::all_of(requests_.begin(), requests_.end(),
                       [](const RequestState & r) { return r.done; });
}

int BatchEngine::active_batch() const {
    int n = 0;
    for (const RequestState & r : requests_) {
        n += r.done ? 0 : 1;
    }
    return n;
}

void BatchEngine::step() {
    std::vector<RequestState *> active;
    for (RequestState & r : requests_) {
        if (!r.done) {
            active.push_back(&r);
        }
    }
    if (active.empty()) {
        throw std::runtime_error("BatchEngine: empty batch");
    }
    const int batch = static_cast<int>(active.size());
    active_trace_.push_back(batch);

    const SDConfig desired = table_ ? table_->solve(batch) : mode_;
    if (mode_initialized_ && !(desired == mode_)) {
        if (!mode_.enabled && desired.enabled) {
            // Non-spec -> spec: rebuild drafter state over all active
            // contexts via the prefill interface.
            int ctx_tokens = 0;
            for (RequestState * r : active) {
                ctx_tokens += static_cast<int>(r->full_ctx().length());
            }
            ledger_.add(ModelRole::Drafter, ctx_tokens, ctx_tokens);
            ++prefill_events_;
        }
        // Spec -> non-spec just discards speculative metadata.
        switches_.push_back({cycle_, batch, mode_, desired});
    }
    mode_ = desired;
    mode_initialized_ = true;
    for (RequestState * r : active) {
        r->spec_flag = mode_.enabled;
    }

    std::shared_ptr<const TabularARModel> drafter;
    if (mode_.enabled) {
        drafter = drafter_();
        if (!drafter) {
            throw std::runtime_error("BatchEngine: spec mode requires a drafter snapshot");
        }
    }
    drafter_versions_.push_back(drafter ? drafter->version() : -1);

    if (mode_.enabled) {
        std::vector<VerifyOutcome> outcomes;
        outcomes.reserve(active.size());
        for (RequestState * r : active) {
            VerifyOutcome out = spec_step_tree(target_, *drafter, r->full_ctx(), mode_,
                                               r->rng, r->eos_bias, true, r->remaining());
            for (int tok : out.accepted_tokens) {
                r->generated.push_back(tok);
            }
            r->steps.insert(r->steps.end(), out.steps.begin(), out.steps.end());
            if (!out.draft_records.empty()) {
                r->accept_lens.push_back(out.accept_len);
            }
            if (out.ended || r->remaining() == 0) {
                r->done = true;
            }
            outcomes.push_back(std::move(out));
        }
        charge_batched_cycle(ledger_, outcomes);
    } else {
        const int eos = target_.vocab().eos();
        for (RequestState * r : active) {
            CategoricalDist pd = target_.next_dist(r->full_ctx(), r->eos_bias);
            int tok = sample_from(pd, r->rng.draft_uniform());
            StepRecord s;
            s.token = tok;
            s.target_logprobs.resize(pd.probs.size());
            for (size_t i = 0; i < pd.probs.size(); ++i) {
                s.target_logprobs[i] = std::log(pd.probs[i]);
            }
            s.logp = s.target_logprobs[static_cast<size_t>(tok)];
            r->steps.push_back(std::move(s));
            r->generated.push_back(tok);
            if (tok == eos || r->remaining() == 0) {
                r->done = true;
            }
        }
        ledger_.add(ModelRole::Target, batch, batch);
    }
    ++cycle_;
}

GenerationRun run_generation(std::vector<RequestState> requests,
                             const TabularARModel & target, DrafterSnapshotFn drafter,
                             const ProfileTable * table, const TimingModel & tm,
                             SDConfig forced, int actor_version) {
    BatchEngine engine(target, std::move(drafter), table, &tm, std::move(requests), forced);
    while (!engine.all_done()) {
        engine.step();
    }
    GenerationRun run;
    run.ledger = engine.ledger();
    run.total_time = ledger_time(tm, run.ledger);
    run.switches = engine.switches();
    run.active_trace = engine.active_trace();
    run.cycles = engine.cycles();
    for (RequestState & r : engine.requests()) {
        run.accept_lens.insert(run.accept_lens.end(), r.accept_lens.begin(), r.accept_lens.end());
        RolloutSample s;
        s.prompt = r.prompt.tokens;
        s.response = r.generated;
        s.steps = std::move(r.steps);
        s.eos_bias = r.eos_bias;
        s.actor_version = actor_version;
        run.samples.push_back(std::move(s));
    }
    return run;
}

} // namespace respec
