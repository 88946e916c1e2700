#include "respec/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "respec/learner.hpp"
#include "respec/oracles.hpp"
#include "respec/rl.hpp"
#include "respec/specdec.hpp"

namespace respec {

void VerifyReport::add(const std::string & name, bool pass, const std::string & detail) {
    lines.push_back({name, pass, detail});
    all_pass = all_pass && pass;
}

std::string format_report(const VerifyReport & report) {
    std::ostringstream out;
    for (const auto & line : report.lines) {
        out << (line.pass ? "PASS" : "FAIL") << "  " << line.name << "  (" << line.detail
            << ")\n";
    }
    out << (report.all_pass ? "verify: all checks passed\n" : "verify: FAILURES present\n");
    return out.str();
}

namespace {

CategoricalDist random_dist(std::mt19937_64 & rng, int v, double floor = 0.05) {
    std::exponential_distribution<double> exp1(1.0);
    std::vector<double> p(static_cast<size_t>(v));
    double sum = 0.0;
    for (double & x : p) {
        x = exp1(rng) + floor;
        sum += x;
    }
    for (double & x : p) {
        x /= sum;
    }
    return CategoricalDist{std::move(p)};
}

double max_abs_diff(const CategoricalDist & a, const CategoricalDist & b) {
    double m = 0.0;
    for (size_t i = 0; i < a.probs.size(); ++i) {
        m = std::max(m, std::abs(a.probs[i] - b.probs[i]));
    }
    return m;
}

// Induced distribution assembled from the production acceptance rule and
// residual, as a cross-check that the shipped pieces compose losslessly.
CategoricalDist induced_from_impl(const CategoricalDist & p, const CategoricalDist & q) {
    const size_t v = p.probs.size();
    CategoricalDist out{std::vector<double>(v, 0.0)};
    double p_reject = 1.0;
    for (size_t d = 0; d < v; ++d) {
        const double a = q.probs[d] * accept_prob(p.probs[d], q.probs[d]);
        out.probs[d] += a;
        p_reject -= a;
    }
    if (p_reject > 1e-12) {
        const CategoricalDist r = residual_dist(p, q);
        for (size_t x = 0; x < v; ++x) {
            out.probs[x] += p_reject * r.probs[x];
        }
    }
    return out;
}

double grad_scale_err(const std::vector<double> & analytic, const std::vector<double> & fd) {
    double max_diff = 0.0;
    double max_fd = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(analytic[i] - fd[i]));
        max_fd = std::max(max_fd, std::abs(fd[i]));
    }
    return max_diff / (1.0 + max_fd);
}

std::vector<RolloutSample> sample_rollouts(const TabularARModel & target,
                                           const TabularARModel & drafter, int count,
                                           std::mt19937_64 & rng) {
    std::vector<RolloutSample> samples;
    std::uniform_real_distribution<double> bias(-1.0, 1.0);
    for (int i = 0; i < count; ++i) {
        Context prompt{{static_cast<int>(rng() % static_cast<uint64_t>(target.vocab().size))}};
        DecodeRng drng = DecodeRng::from_seed(rng(), 0);
        RolloutSample s;
        s.eos_bias = bias(rng);
        GenerateResult gen =
            generate(target, drafter, prompt, SDConfig::off(), 6, drng, s.eos_bias);
        if (gen.tokens.empty()) {
            continue;
        }
        s.prompt = prompt.tokens;
        s.response = gen.tokens;
        s.steps = gen.steps;
        s.actor_version = target.version();
        samples.push_back(std::move(s));
    }
    return samples;
}

} // namespace

VerifyReport run_verify(uint64_t seed) {
    VerifyReport report;
    std::mt19937_64 rng(mix64(seed ^ 0xF00DF00Du));

    // 1. chain single-step losslessness, closed form
    {
        double worst_impl = 0.0, worst_oracle = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const int v = 2 + static_cast<int>(rng() % 7); // V in [2, 8]
            const CategoricalDist p = random_dist(rng, v);
            const CategoricalDist q = random_dist(rng, v);
            worst_impl = std::max(worst_impl, max_abs_diff(induced_from_impl(p, q), p));
            worst_oracle =
                std::max(worst_oracle, max_abs_diff(induced_single_step_chain(p, q), p));
        }
        std::ostringstream d;
        d << "max dev impl=" << worst_impl << " oracle=" << worst_oracle << " tol=1e-12";
        report.add("chain-single-step-lossless",
                   worst_impl <= 1e-12 && worst_oracle <= 1e-12, d.str());
    }

    // negative control: a perturbed acceptance rule must break the identity
    {
        double best_dev = 0.0;
        for (int i = 0; i < 50; ++i) {
            const CategoricalDist p = random_dist(rng, 4);
            const CategoricalDist q = random_dist(rng, 4);
            best_dev = std::max(best_dev,
                                max_abs_diff(induced_single_step_chain(p, q, 0.01), p));
        }
        std::ostringstream d;
        d << "max dev under mutation=" << best_dev << " must exceed 1e-6";
        report.add("mutated-acceptance-detected", best_dev > 1e-6, d.str());
    }

    // 2. chain block losslessness by exhaustive sequence enumeration
    {
        double worst = 0.0;
        const Vocabulary v4{4};
        for (int i = 0; i < 4; ++i) {
            TabularARModel target = TabularARModel::random(v4, 0, 1.0, 0.8, rng);
            TabularARModel drafter = TabularARModel::random(v4, 0, 1.0, 0.8, rng);
            const Context prompt{{0}};
            const double bias = (i % 2 == 0) ? 0.0 : 0.5;
            const auto sd = enumerate_generate_chain(target, drafter, prompt, 3, 4, bias);
            const auto naive = enumerate_generate_naive(target, prompt, 4, bias);
            worst = std::max(worst, tv_distance_seq(sd, naive));
        }
        std::ostringstream d;
        d << "max TV=" << worst << " tol=1e-9";
        report.add("chain-block-lossless", worst <= 1e-9, d.str());
    }

    // 3. tree single-position losslessness over t candidates
    {
        double worst = 0.0;
        for (int t = 1; t <= 3; ++t) {
            for (int i = 0; i < 20; ++i) {
                const CategoricalDist p = random_dist(rng, 4);
                const CategoricalDist q = random_dist(rng, 4);
                worst = std::max(worst, max_abs_diff(induced_tree_single_position(p, q, t), p));
            }
        }
        std::ostringstream d;
        d << "max dev=" << worst << " tol=1e-9";
        report.add("tree-single-position-lossless", worst <= 1e-9, d.str());
    }

    // 4. acceptance-ratio variance identity vs brute force
    {
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const int v = 2 + static_cast<int>(rng() % 3);
            const int steps = 1 + static_cast<int>(rng() % 4);
            std::vector<std::pair<CategoricalDist, CategoricalDist>> inst;
            for (int t = 0; t < steps; ++t) {
                inst.emplace_back(random_dist(rng, v), random_dist(rng, v));
            }
            const double analytic = accept_ratio_variance(inst);
            const double brute = brute_force_accept_ratio_variance(inst);
            worst = std::max(worst,
                             std::abs(analytic - brute) / std::max(1.0, std::abs(analytic)));
        }
        // worked value: per-step chi-square 0.1 over two steps -> 1.1^2 - 1
        const double a = (1.0 + std::sqrt(0.1)) / 2.0;
        const CategoricalDist p{{a, 1.0 - a}};
        const CategoricalDist q{{0.5, 0.5}};
        const double worked = accept_ratio_variance({{p, q}, {p, q}});
        const double worked_err = std::abs(worked - 0.21);
        std::ostringstream d;
        d << "max rel err=" << worst << " worked(0.21) err=" << worked_err << " tol=1e-12";
        report.add("accept-ratio-variance-identity", worst <= 1e-12 && worked_err <= 1e-12,
                   d.str());
    }

    // 5. policy-gradient finite-difference check
    {
        double worst = 0.0;
        const double h = 1e-5;
        for (int i = 0; i < 50; ++i) {
            const Vocabulary v3{3};
            TabularARModel actor = TabularARModel::random(v3, 1, 1.0, 0.7, rng);
            auto rollouts = sample_rollouts(actor, actor, 3, rng);
            if (rollouts.empty()) {
                continue;
            }
            std::vector<std::pair<const RolloutSample *, double>> weighted;
            std::uniform_real_distribution<double> adv(-1.5, 1.5);
            for (const auto & s : rollouts) {
                weighted.emplace_back(&s, adv(rng));
            }
            const std::vector<double> analytic = policy_objective_gradient(actor, weighted);
            std::vector<double> fd(analytic.size());
            for (size_t c = 0; c < fd.size(); ++c) {
                std::vector<double> delta(fd.size(), 0.0);
                delta[c] = h;
                const double up = policy_objective(actor.with_logits_delta(delta), weighted);
                delta[c] = -h;
                const double dn = policy_objective(actor.with_logits_delta(delta), weighted);
                fd[c] = (up - dn) / (2.0 * h);
            }
            worst = std::max(worst, grad_scale_err(analytic, fd));
        }
        std::ostringstream d;
        d << "max scaled err=" << worst << " tol=1e-5";
        report.add("policy-gradient-fd", worst <= 1e-5, d.str());
    }

    // 6. KD-loss drafter-gradient finite-difference check
    {
        double worst = 0.0;
        const double h = 1e-5;
        for (int i = 0; i < 50; ++i) {
            const Vocabulary v3{3};
            TabularARModel target = TabularARModel::random(v3, 1, 1.0, 0.7, rng);
            TabularARModel drafter = TabularARModel::random(v3, 1, 1.0, 0.7, rng);
            auto rollouts = sample_rollouts(target, drafter, 3, rng);
            if (rollouts.empty()) {
                continue;
            }
            std::vector<std::pair<const RolloutSample *, double>> weighted;
            std::uniform_real_distribution<double> wdist(0.25, 2.5);
            for (const auto & s : rollouts) {
                weighted.emplace_back(&s, wdist(rng));
            }
            const std::vector<double> analytic = kd_loss_gradient(drafter, weighted);
            auto loss_at = [&](const TabularARModel & m) {
                double total = 0.0;
                for (const auto & [s, w] : weighted) {
                    total += kd_loss(m, *s, w);
                }
                return total;
            };
            std::vector<double> fd(analytic.size());
            for (size_t c = 0; c < fd.size(); ++c) {
                std::vector<double> delta(fd.size(), 0.0);
                delta[c] = h;
                const double up = loss_at(drafter.with_logits_delta(delta));
                delta[c] = -h;
                const double dn = loss_at(drafter.with_logits_delta(delta));
                fd[c] = (up - dn) / (2.0 * h);
            }
            worst = std::max(worst, grad_scale_err(analytic, fd));
        }
        std::ostringstream d;
        d << "max scaled err=" << worst << " tol=1e-5";
        report.add("kd-gradient-fd", worst <= 1e-5, d.str());
    }

    return report;
}

} // namespace respec
