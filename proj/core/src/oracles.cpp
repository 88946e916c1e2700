#include "respec/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace respec {

namespace {

// Local positive-part normalization, kept separate from the sampler's
// residual_dist on purpose.
std::vector<double> positive_residual(const std::vector<double> & p,
                                      const std::vector<double> & q) {
    std::vector<double> r(p.size());
    double norm = 0.0;
    for (size_t x = 0; x < p.size(); ++x) {
        r[x] = std::max(0.0, p[x] - q[x]);
        norm += r[x];
    }
    if (norm <= 0.0) {
        throw std::invalid_argument("oracle residual: p == q");
    }
    for (double & v : r) {
        v /= norm;
    }
    return r;
}

} // namespace

CategoricalDist induced_single_step_chain(const CategoricalDist & p,
                                          const CategoricalDist & q,
                                          double accept_perturb) {
    const size_t V = p.probs.size();
    std::vector<double> out(V, 0.0);
    double p_reject = 0.0;
    for (size_t d = 0; d < V; ++d) {
        if (q.probs[d] <= 0.0) {
            continue;
        }
        double a = std::min(1.0, p.probs[d] / q.probs[d] + accept_perturb);
        a = std::max(0.0, a);
        out[d] += q.probs[d] * a;
        p_reject += q.probs[d] * (1.0 - a);
    }
    if (p_reject > 0.0) {
        std::vector<double> r = positive_residual(p.probs, q.probs);
        for (size_t x = 0; x < V; ++x) {
            out[x] += p_reject * r[x];
        }
    }
    return CategoricalDist{std::move(out)};
}

CategoricalDist induced_tree_single_position(const CategoricalDist & p,
                                             const CategoricalDist & q, int t) {
    const size_t V = p.probs.size();
    std::vector<double> out(V, 0.0);
    std::vector<double> p_cur = p.probs; // normalized residual after i rejections
    double reach = 1.0;                  // prob that stage i is reached
    for (int i = 0; i < t; ++i) {
        double reject = 0.0;
        for (size_t cand = 0; cand < V; ++cand) {
            if (q.probs[cand] <= 0.0) {
                continue;
            }
            const double a = std::min(1.0, p_cur[cand] / q.probs[cand]);
            out[cand] += reach * q.probs[cand] * a;
            reject += q.probs[cand] * (1.0 - a);
        }
        reach *= reject;
        if (reach <= 0.0) {
            return CategoricalDist{std::move(out)};
        }
        p_cur = positive_residual(p_cur, q.probs);
    }
    for (size_t x = 0; x < V; ++x) {
        out[x] += reach * p_cur[x];
    }
    return CategoricalDist{std::move(out)};
}

namespace {

using SeqDist = std::map<std::vector<int>, double>;

struct ChainEnumerator {
    const TabularARModel & target;
    const TabularARModel & drafter;
    int k;
    int max_len;
    double eos_bias;
    int eos;
    SeqDist result;

    void run(const Context & prompt) {
        expand(prompt.tokens, {}, 1.0);
    }

    void expand(const std::vector<int> & prompt, const std::vector<int> & emitted, double prob) {
        if (prob <= 0.0) {
            return;
        }
        const int len = static_cast<int>(emitted.size());
        if (len == max_len || (len > 0 && emitted.back() == eos)) {
            result[emitted] += prob;
            return;
        }
        std::vector<int> ctx_tokens = prompt;
        ctx_tokens.insert(ctx_tokens.end(), emitted.begin(), emitted.end());
        const int remaining = max_len - len;
        if (remaining == 1) {
            CategoricalDist pd = target.next_dist(Context{ctx_tokens}, eos_bias);
            for (int x = 0; x < pd.size(); ++x) {
                if (pd[x] > 0.0) {
                    std::vector<int> next = emitted;
                    next.push_back(x);
                    expand(prompt, next, prob * pd[x]);
                }
            }
            return;
        }
        const int k_eff = std::min(k, remaining - 1);
        enumerate_blocks(prompt, emitted, ctx_tokens, {}, prob, k_eff);
    }

    // Recursively enumerate drafter blocks (stopping at EOS or k_eff),
    // then all verification outcomes of the complete block.
    void enumerate_blocks(const std::vector<int> & prompt, const std::vector<int> & emitted,
                          const std::vector<int> & ctx_tokens, std::vector<int> block,
                          double prob, int k_eff) {
        if (static_cast<int>(block.size()) == k_eff ||
            (!block.empty() && block.back() == eos)) {
            verify_block(prompt, emitted, ctx_tokens, block, prob);
            return;
        }
        std::vector<int> c = ctx_tokens;
        c.insert(c.end(), block.begin(), block.end());
        CategoricalDist qd = drafter.next_dist(Context{c}, eos_bias);
        for (int d = 0; d < qd.size(); ++d) {
            if (qd[d] <= 0.0) {
                continue;
            }
            std::vector<int> next = block;
            next.push_back(d);
            enumerate_blocks(prompt, emitted, ctx_tokens, std::move(next),
                             prob * qd[d], k_eff);
        }
    }

    void verify_block(const std::vector<int> & prompt, const std::vector<int> & emitted,
                      const std::vector<int> & ctx_tokens, const std::vector<int> & block,
                      double prob) {
        const int j = static_cast<int>(block.size());
        double accept_all = 1.0;
        std::vector<int> c = ctx_tokens;
        for (int i = 0; i < j; ++i) {
            CategoricalDist pd = target.next_dist(Context{c}, eos_bias);
            CategoricalDist qd = drafter.next_dist(Context{c}, eos_bias);
            const int d = block[static_cast<size_t>(i)];
            const double a = std::min(1.0, pd[d] / qd[d]);
            // Rejection at position i: replacement from the residual.
            const double p_rej = accept_all * (1.0 - a);
            if (p_rej > 0.0) {
                std::vector<double> r = positive_residual(pd.probs, qd.probs);
                for (int x = 0; x < static_cast<int>(r.size()); ++x) {
                    if (r[static_cast<size_t>(x)] <= 0.0) {
                        continue;
                    }
                    std::vector<int> next = emitted;
                    next.insert(next.end(), block.begin(), block.begin() + i);
                    next.push_back(x);
                    expand(prompt, next, prob * p_rej * r[static_cast<size_t>(x)]);
                }
            }
            accept_all *= a;
            if (accept_all <= 0.0) {
                return;
            }
            c.push_back(d);
        }
        // Full acceptance.
        std::vector<int> base = emitted;
        base.insert(base.end(), block.begin(), block.end());
        if (block.back() == eos) {
            expand(prompt, base, prob * accept_all);
            return;
        }
        CategoricalDist pd = target.next_dist(Context{c}, eos_bias);
        for (int x = 0; x < pd.size(); ++x) {
            if (pd[x] <= 0.0) {
                continue;
            }
            std::vector<int> next = base;
            next.push_back(x);
            expand(prompt, next, prob * accept_all * pd[x]);
        }
    }
};

} // namespace

SeqDist enumerate_generate_chain(const TabularARModel & target, const TabularARModel & drafter,
                                 const Context & prompt, int k, int max_len, double eos_bias) {
    ChainEnumerator e{target, drafter, k, max_len, eos_bias, target.vocab().eos(), {}};
    e.run(prompt);
    return e.result;
}

SeqDist enumerate_generate_naive(const TabularARModel & target, const Context & prompt,
                                 int max_len, double eos_bias) {
    const int eos = target.vocab().eos();
    SeqDist result;
    std::function<void(std::vector<int>, double)> expand =
        [&](std::vector<int> emitted, double prob) {
            const int len = static_cast<int>(emitted.size());
            if (len == max_len || (len > 0 && emitted.back() == eos)) {
                result[emitted] += prob;
                return;
            }
            std::vector<int> c = prompt.tokens;
            c.insert(c.end(), emitted.begin(), emitted.end());
            CategoricalDist pd = target.next_dist(Context{c}, eos_bias);
            for (int x = 0; x < pd.size(); ++x) {
                if (pd[x] > 0.0) {
                    std::vector<int> next = emitted;
                    next.push_back(x);
                    expand(std::move(next), prob * pd[x]);
                }
            }
        };
    expand({}, 1.0);
    return result;
}

double tv_distance_seq(const SeqDist & a, const SeqDist & b) {
    double s = 0.0;
    for (const auto & [seq, pa] : a) {
        auto it = b.find(seq);
        s += std::abs(pa - (it == b.end() ? 0.0 : it->second));
    }
    for (const auto & [seq, pb] : b) {
        if (a.find(seq) == a.end()) {
            s += pb;
        }
    }
    return 0.5 * s;
}

double brute_force_accept_ratio_variance(
    const std::vector<std::pair<CategoricalDist, CategoricalDist>> & steps) {
    double mean = 0.0;
    double second = 0.0;
    std::function<void(size_t, double, double)> walk =
        [&](size_t i, double q_prob, double ratio) {
            if (i == steps.size()) {
                mean += q_prob * ratio;
                second += q_prob * ratio * ratio;
                return;
            }
            const auto & [p, q] = steps[i];
            for (int x = 0; x < p.size(); ++x) {
                if (q[x] <= 0.0) {
                    if (p[x] > 0.0) {
                        throw std::invalid_argument(
                            "brute_force_accept_ratio_variance: supp(p) not in supp(q)");
                    }
                    continue;
                }
                walk(i + 1, q_prob * q[x], ratio * p[x] / q[x]);
            }
        };
    walk(0, 1.0, 1.0);
    return second - mean * mean;
}

} // namespace respec
