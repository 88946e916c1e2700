#include "respec/specdec.hpp"

#include <cmath>
#include <stdexcept>

namespace respec {

std::string SDConfig::key() const {
    if (!enabled) {
        return "off";
    }
    return "s" + std::to_string(rounds) + "_t" + std::to_string(branching) +
           "_n" + std::to_string(draft_len);
}

std::vector<std::pair<double, double>> VerifyOutcome::draft_target_logprobs() const {
    std::vector<std::pair<double, double>> out;
    out.reserve(draft_records.size());
    for (const DraftPosRecord & r : draft_records) {
        out.emplace_back(r.logq, r.logp);
    }
    return out;
}

double accept_prob(double p, double q) {
    if (!(q > 0.0)) {
        throw std::invalid_argument("accept_prob: drafted token must have q > 0");
    }
    if (p < 0.0 || p > 1.0 || q > 1.0) {
        throw std::invalid_argument("accept_prob: probabilities out of range");
    }
    return std::min(1.0, p / q);
}

CategoricalDist residual_dist(const CategoricalDist & p, const CategoricalDist & q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("residual_dist: size mismatch");
    }
    std::vector<double> r(static_cast<size_t>(p.size()));
    double norm = 0.0;
    for (int x = 0; x < p.size(); ++x) {
        r[static_cast<size_t>(x)] = std::max(0.0, p[x] - q[x]);
        norm += r[static_cast<size_t>(x)];
    }
    if (norm <= 1e-12) {
        throw std::invalid_argument("residual_dist: degenerate residual (p == q)");
    }
    for (double & v : r) {
        v /= norm;
    }
    return CategoricalDist{std::move(r)};
}

namespace {

Context extend(const Context & base, const std::vector<int> & ext, size_t count) {
    Context c = base;
    c.tokens.insert(c.tokens.end(), ext.begin(), ext.begin() + static_cast<long>(count));
    return c;
}

StepRecord make_step(int token, const CategoricalDist & target_dist,
                     bool drafted, double logq) {
    StepRecord s;
    s.token = token;
    s.target_logprobs.resize(target_dist.probs.size());
    for (size_t i = 0; i < s.target_logprobs.size(); ++i) {
        s.target_logprobs[i] = std::log(target_dist.probs[i]);
    }
    s.logp = s.target_logprobs[static_cast<size_t>(token)];
    s.drafted = drafted;
    s.logq = logq;
    return s;
}

} // namespace

VerifyOutcome spec_step_chain(const TabularARModel & target, const TabularARModel & drafter,
                              const Context & ctx, int k, DecodeRng & rng,
                              double eos_bias, bool stop_at_eos) {
    if (k < 1) {
        throw std::invalid_argument("spec_step_chain: k must be >= 1");
    }
    const int eos = target.vocab().eos();
    VerifyOutcome out;

    // Drafting: autoregressive block of up to k tokens, stopping at EOS.
    std::vector<int> block;
    std::vector<CategoricalDist> q_dists;
    std::vector<CategoricalDist> p_dists;
    for (int i = 0; i < k; ++i) {
        Context c = extend(ctx, block, block.size());
        CategoricalDist qd = drafter.next_dist(c, eos_bias);
        int d = sample_from(qd, rng.draft_uniform());
        CategoricalDist pd = target.next_dist(c, eos_bias);
        out.draft_records.push_back({block, d,
                                     std::log(qd[d]), std::log(pd[d])});
        q_dists.push_back(std::move(qd));
        p_dists.push_back(std::move(pd));
        block.push_back(d);
        if (stop_at_eos && d == eos) {
            break;
        }
    }
    const int j = static_cast<int>(block.size());
    out.rounds.push_back({j, 1, j + 1});

    // Validation: sequential acceptance, residual replacement on the
    // first rejection, bonus token on full acceptance.
    for (int i = 0; i < j; ++i) {
        const int d = block[static_cast<size_t>(i)];
        const double a = accept_prob(p_dists[static_cast<size_t>(i)][d],
                                     q_dists[static_cast<size_t>(i)][d]);
        if (rng.accept_uniform() < a) {
            out.steps.push_back(make_step(d, p_dists[static_cast<size_t>(i)], true,
                                          std::log(q_dists[static_cast<size_t>(i)][d])));
            out.accepted_tokens.push_back(d);
            out.accept_len += 1;
            if (stop_at_eos && d == eos) {
                out.ended = true;
                return out;
            }
        } else {
            CategoricalDist r = residual_dist(p_dists[static_cast<size_t>(i)],
                                              q_dists[static_cast<size_t>(i)]);
            int x = sample_from(r, rng.accept_uniform());
            out.steps.push_back(make_step(x, p_dists[static_cast<size_t>(i)], false, 0.0));
            out.accepted_tokens.push_back(x);
            out.bonus_token = x;
            out.ended = stop_at_eos && x == eos;
            return out;
        }
    }

    // Full acceptance: one bonus token from the target's next distribution.
    Context c = extend(ctx, block, block.size());
    CategoricalDist pd = target.next_dist(c, eos_bias);
    int x = sample_from(pd, rng.accept_uniform());
    out.steps.push_back(make_step(x, pd, false, 0.0));
    out.accepted_tokens.push_back(x);
    out.bonus_token = x;
    out.ended = stop_at_eos && x == eos;
    return out;
}

VerifyOutcome spec_step_tree(const TabularARModel & target, const TabularARModel & drafter,
                             const Context & ctx, const SDConfig & cfg, DecodeRng & rng,
                             double eos_bias, bool stop_at_eos, int max_emit) {
    if (!cfg.enabled) {
        throw std::invalid_argument("spec_step_tree: config is disabled");
    }
    const int eos = target.vocab().eos();
    VerifyOutcome out;
    std::vector<int> accepted; // relative to ctx

    auto emit = [&](int token, const CategoricalDist & pd, bool drafted, double logq) {
        out.steps.push_back(make_step(token, pd, drafted, logq));
        out.accepted_tokens.push_back(token);
        accepted.push_back(token);
        if (stop_at_eos && token == eos) {
            out.ended = true;
        }
    };

    for (int round = 0; round < cfg.rounds && !out.ended; ++round) {
        const int remaining = max_emit - static_cast<int>(accepted.size());
        if (remaining < 2) {
            break;
        }
        const int n_eff = std::min(cfg.draft_len, remaining - 1);
        const Context round_ctx = extend(ctx, accepted, accepted.size());

        // Draft t independent candidate chains of up to n_eff tokens.
        std::vector<std::vector<int>> chains(static_cast<size_t>(cfg.branching));
        size_t longest = 0;
        int tree_tokens = 0;
        for (auto & chain : chains) {
            for (int pos = 0; pos < n_eff; ++pos) {
                Context c = extend(round_ctx, chain, chain.size());
                CategoricalDist qd = drafter.next_dist(c, eos_bias);
                int d = sample_from(qd, rng.draft_uniform());
                CategoricalDist pd = target.next_dist(c, eos_bias);
                std::vector<int> prefix = accepted;
                prefix.insert(prefix.end(), chain.begin(), chain.end());
                out.draft_records.push_back({std::move(prefix), d,
                                             std::log(qd[d]), std::log(pd[d])});
                chain.push_back(d);
                ++tree_tokens;
                if (stop_at_eos && d == eos) {
                    break;
                }
            }
            longest = std::max(longest, chain.size());
        }
        out.rounds.push_back({static_cast<int>(longest), cfg.branching, tree_tokens + 1});

        // Branch point: recursive rejection over the t sibling candidates.
        CategoricalDist p1 = target.next_dist(round_ctx, eos_bias);
        CategoricalDist q1 = drafter.next_dist(round_ctx, eos_bias);
        CategoricalDist p_cur = p1;
        int selected = -1;
        for (int i = 0; i < cfg.branching; ++i) {
            const int cand = chains[static_cast<size_t>(i)][0];
            const double a = std::min(1.0, p_cur[cand] / q1[cand]);
            if (rng.accept_uniform() < a) {
                selected = i;
                break;
            }
            p_cur = residual_dist(p_cur, q1);
        }
        if (selected < 0) {
            // All siblings rejected: sample from the final residual.
            int x = sample_from(p_cur, rng.accept_uniform());
            emit(x, p1, false, 0.0);
            out.bonus_token = x;
            return out;
        }

        const std::vector<int> & chain = chains[static_cast<size_t>(selected)];
        emit(chain[0], p1, true, std::log(q1[chain[0]]));
        out.accept_len += 1;
        if (out.ended) {
            return out;
        }

        // Remaining positions of the selected chain verify chain-style.
        bool rejected = false;
        for (size_t pos = 1; pos < chain.size() && !out.ended; ++pos) {
            Context c = extend(ctx, accepted, accepted.size());
            CategoricalDist pd = target.next_dist(c, eos_bias);
            CategoricalDist qd = drafter.next_dist(c, eos_bias);
            const int d = chain[pos];
            const double a = accept_prob(pd[d], qd[d]);
            if (rng.accept_uniform() < a) {
                emit(d, pd, true, std::log(qd[d]));
                out.accept_len += 1;
            } else {
                CategoricalDist r = residual_dist(pd, qd);
                int x = sample_from(r, rng.accept_uniform());
                emit(x, pd, false, 0.0);
                out.bonus_token = x;
                rejected = true;
                break;
            }
        }
        if (rejected || out.ended) {
            return out;
        }
        if (static_cast<int>(chain.size()) < n_eff) {
            // Chain was EOS-shortened; full acceptance implies EOS emitted,
            // handled above. Reaching here means stop_at_eos is off.
            continue;
        }
    }

    if (!out.ended && static_cast<int>(accepted.size()) < max_emit) {
        Context c = extend(ctx, accepted, accepted.size());
        CategoricalDist pd = target.next_dist(c, eos_bias);
        int x = sample_from(pd, rng.accept_uniform());
        emit(x, pd, false, 0.0);
        out.bonus_token = x;
        if (out.rounds.empty()) {
            // max_emit == 1: the cycle degenerated to a single plain
            // target step, which still costs one forward.
            out.rounds.push_back({0, 0, 1});
        }
    }
    return out;
}

GenerateResult generate(const TabularARModel & target, const TabularARModel & drafter,
                        const Context & prompt, const SDConfig & cfg, int max_len,
                        DecodeRng & rng, double eos_bias, bool stop_at_eos) {
    if (max_len < 1) {
        throw std::invalid_argument("generate: max_len must be >= 1");
    }
    const int eos = target.vocab().eos();
    GenerateResult res;
    Context ctx = prompt;

    auto naive_step = [&]() {
        CategoricalDist pd = target.next_dist(ctx, eos_bias);
        int tok = sample_from(pd, rng.draft_uniform());
        res.steps.push_back(make_step(tok, pd, false, 0.0));
        res.tokens.push_back(tok);
        res.ledger.add(ModelRole::Target, 1, 1);
        ctx.push(tok);
        if (stop_at_eos && tok == eos) {
            res.ended_eos = true;
        }
    };

    while (static_cast<int>(res.tokens.size()) < max_len && !res.ended_eos) {
        const int remaining = max_len - static_cast<int>(res.tokens.size());
        if (!cfg.enabled || remaining == 1) {
            naive_step();
            continue;
        }
        VerifyOutcome out = spec_step_tree(target, drafter, ctx, cfg, rng,
                                           eos_bias, stop_at_eos, remaining);
        for (const RoundCost & rc : out.rounds) {
            for (int f = 0; f < rc.drafter_forwards; ++f) {
                res.ledger.add(ModelRole::Drafter, rc.drafter_tokens_each, rc.drafter_tokens_each);
            }
            res.ledger.add(ModelRole::Target, rc.target_tokens, rc.target_tokens);
        }
        res.accept_lens.push_back(out.accept_len);
        for (int tok : out.accepted_tokens) {
            res.tokens.push_back(tok);
            ctx.push(tok);
        }
        res.steps.insert(res.steps.end(), out.steps.begin(), out.steps.end());
        res.ended_eos = out.ended;
    }
    return res;
}

double mean_accept_len(const std::vector<int> & accept_lens) {
    if (accept_lens.empty()) {
        throw std::invalid_argument("mean_accept_len: no verification cycles recorded");
    }
    double sum = 0.0;
    for (int a : accept_lens) {
        sum += a;
    }
    return sum / static_cast<double>(accept_lens.size());
}

} // namespace respec
