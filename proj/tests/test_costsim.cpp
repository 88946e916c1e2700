#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "respec/costsim.hpp"
#include "respec/oracles.hpp"
#include "respec/rng.hpp"

using namespace respec;

TEST_CASE("chi2 divergence") {
    CHECK(chi2_divergence(CategoricalDist{{0.5, 0.5}}, CategoricalDist{{0.5, 0.5}}) ==
          doctest::Approx(0.0).epsilon(1e-12));
    // sum p^2/q - 1 = (0.64/0.5 + 0.04/0.5) - 1 = 0.36
    CHECK(chi2_divergence(CategoricalDist{{0.8, 0.2}}, CategoricalDist{{0.5, 0.5}}) ==
          doctest::Approx(0.36).epsilon(1e-12));
    // q = 0 where p > 0 is unbounded
    CHECK_THROWS(chi2_divergence(CategoricalDist{{0.5, 0.5}}, CategoricalDist{{1.0, 0.0}}));
    // p = 0 where q > 0 is fine
    CHECK_NOTHROW(chi2_divergence(CategoricalDist{{1.0, 0.0}}, CategoricalDist{{0.5, 0.5}}));
}

TEST_CASE("acceptance-ratio variance") {
    SUBCASE("p == q at every step gives zero variance") {
        CategoricalDist u{{0.5, 0.5}};
        CHECK(accept_ratio_variance({{u, u}, {u, u}, {u, u}}) ==
              doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("worked two-step example: chi2 = 0.1 per step gives 0.21") {
        const double a = (1.0 + std::sqrt(0.1)) / 2.0;
        CategoricalDist p{{a, 1.0 - a}};
        CategoricalDist q{{0.5, 0.5}};
        CHECK(chi2_divergence(p, q) == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(accept_ratio_variance({{p, q}, {p, q}}) == doctest::Approx(0.21).epsilon(1e-12));
    }

    SUBCASE("matches brute-force enumeration on random instances") {
        std::mt19937_64 rng(77);
        for (int inst = 0; inst < 100; ++inst) {
            std::vector<std::pair<CategoricalDist, CategoricalDist>> steps;
            const int n_steps = 1 + static_cast<int>(rng() % 3);
            for (int s = 0; s < n_steps; ++s) {
                std::vector<double> a(3), b(3);
                double sa = 0, sb = 0;
                for (int j = 0; j < 3; ++j) {
                    a[static_cast<size_t>(j)] = to_unit_double(rng()) + 0.05;
                    b[static_cast<size_t>(j)] = to_unit_double(rng()) + 0.05;
                    sa += a[static_cast<size_t>(j)];
                    sb += b[static_cast<size_t>(j)];
                }
                for (int j = 0; j < 3; ++j) {
                    a[static_cast<size_t>(j)] /= sa;
                    b[static_cast<size_t>(j)] /= sb;
                }
                steps.push_back({CategoricalDist{a}, CategoricalDist{b}});
            }
            const double analytic = accept_ratio_variance(steps);
            const double brute = brute_force_accept_ratio_variance(steps);
            CHECK(std::abs(analytic - brute) <= 1e-12 * (1.0 + std::abs(brute)));
        }
    }
}

TEST_CASE("expected cost per accepted token") {
    // (1 + 10/4) / (14/15): drafter cost 1, target cost 10, alpha 4, r 14/15
    CHECK(expected_cost_per_token(1.0, 10.0, 4.0, 14.0 / 15.0) ==
          doctest::Approx(3.75).epsilon(1e-12));
    // alpha = 1 and r = 1 degenerates to C_q + C_p
    CHECK(expected_cost_per_token(2.0, 8.0, 1.0, 1.0) == doctest::Approx(10.0).epsilon(1e-12));
    // as alpha grows the drafter term dominates: cost -> C_q / r
    CHECK(expected_cost_per_token(2.0, 8.0, 1e12, 0.5) == doctest::Approx(4.0).epsilon(1e-6));
    CHECK_THROWS(expected_cost_per_token(1.0, 10.0, 4.0, 0.0));

    SUBCASE("beats naive decoding iff C_q + C_p/alpha < r * C_p") {
        std::mt19937_64 rng(5);
        for (int i = 0; i < 200; ++i) {
            const double cq = 0.5 + 4.0 * to_unit_double(rng());
            const double cp = 5.0 + 40.0 * to_unit_double(rng());
            const double alpha = 1.0 + 7.0 * to_unit_double(rng());
            const double r = 0.05 + 0.95 * to_unit_double(rng());
            const bool faster = expected_cost_per_token(cq, cp, alpha, r) < cp;
            CHECK(faster == (cq + cp / alpha < r * cp));
        }
    }
}

TEST_CASE("saturating-linear forward time") {
    TimingModel tm; // target: c=1, T_sat=32, f=2; drafter: c=0.1, T_sat=32, f=0.4

    SUBCASE("flat below saturation") {
        CHECK(forward_time(tm, ModelRole::Target, 1) == doctest::Approx(2.0 + 32.0));
        CHECK(forward_time(tm, ModelRole::Target, 32) == doctest::Approx(2.0 + 32.0));
        CHECK(forward_time(tm, ModelRole::Drafter, 7) == doctest::Approx(0.4 + 3.2));
    }

    SUBCASE("linear above saturation") {
        CHECK(forward_time(tm, ModelRole::Target, 64) == doctest::Approx(2.0 + 64.0));
        // doubling well past the knee roughly doubles the variable part
        const double t64 = forward_time(tm, ModelRole::Target, 64);
        const double t128 = forward_time(tm, ModelRole::Target, 128);
        CHECK(t128 - tm.target.latency_floor ==
              doctest::Approx(2.0 * (t64 - tm.target.latency_floor)).epsilon(1e-12));
    }

    SUBCASE("per-forward floor is charged once per event") {
        CostLedger two_small;
        two_small.add(ModelRole::Target, 1, 1);
        two_small.add(ModelRole::Target, 1, 1);
        CostLedger one_big;
        one_big.add(ModelRole::Target, 2, 2);
        CHECK(ledger_time(tm, two_small) > ledger_time(tm, one_big));
    }
}

TEST_CASE("ledger time") {
    TimingModel tm;
    CHECK(ledger_time(tm, CostLedger{}) == 0.0);

    SUBCASE("sums per-event forward times by role") {
        CostLedger l;
        l.add(ModelRole::Drafter, 1, 8);
        l.add(ModelRole::Target, 4, 40);
        CHECK(ledger_time(tm, l) ==
              doctest::Approx(forward_time(tm, ModelRole::Drafter, 8) +
                              forward_time(tm, ModelRole::Target, 40))
                  .epsilon(1e-12));
    }

    SUBCASE("naive decoding of L tokens costs L single-position target forwards") {
        CostLedger l;
        const int L = 9;
        for (int i = 0; i < L; ++i) {
            l.add(ModelRole::Target, 1, 1);
        }
        CHECK(ledger_time(tm, l) == doctest::Approx(L * forward_time(tm, ModelRole::Target, 1)));
    }

    SUBCASE("chain cycles under certain acceptance hit the closed-form speedup") {
        // with drafter == target every cycle emits k+1 tokens for k drafter
        // forwards plus one (k+1)-token verify; at batch 1 everything sits
        // below the saturation knee
        const int k = 4;
        const int cycles = 6;
        CostLedger spec;
        for (int c = 0; c < cycles; ++c) {
            for (int d = 0; d < k; ++d) {
                spec.add(ModelRole::Drafter, 1, 1);
            }
            spec.add(ModelRole::Target, k + 1, k + 1);
        }
        CostLedger naive;
        for (int i = 0; i < cycles * (k + 1); ++i) {
            naive.add(ModelRole::Target, 1, 1);
        }
        const double expected_ratio =
            (k * forward_time(tm, ModelRole::Drafter, 1) + forward_time(tm, ModelRole::Target, k + 1)) /
            ((k + 1) * forward_time(tm, ModelRole::Target, 1));
        CHECK(ledger_time(tm, spec) / ledger_time(tm, naive) ==
              doctest::Approx(expected_ratio).epsilon(1e-12));
        CHECK(expected_ratio < 1.0); // the regime where speculation pays off
    }
}
