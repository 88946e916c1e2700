#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "respec/oracles.hpp"
#include "respec/specdec.hpp"

using namespace respec;

namespace {

TabularARModel random_model(int v, int order, double scale, uint64_t seed) {
    std::mt19937_64 rng(seed);
    return TabularARModel::random(Vocabulary{v}, order, 1.0, scale, rng);
}

// a model whose next token is (almost surely) `tok`, independent of context
TabularARModel point_model(int v, int tok) {
    std::vector<double> row(static_cast<size_t>(v), 0.0);
    row[static_cast<size_t>(tok)] = 60.0;
    return TabularARModel(Vocabulary{v}, 0, row, 1.0);
}

} // namespace

TEST_CASE("accept_prob") {
    CHECK(accept_prob(0.6, 0.3) == 1.0);
    CHECK(accept_prob(0.2, 0.4) == 0.5);
    CHECK(accept_prob(0.37, 0.37) == 1.0);
    CHECK_THROWS(accept_prob(0.5, 0.0));
}

TEST_CASE("residual_dist") {
    CategoricalDist r1 = residual_dist(CategoricalDist{{0.5, 0.3, 0.2}},
                                       CategoricalDist{{0.2, 0.5, 0.3}});
    CHECK(r1[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r1[1] == 0.0);
    CHECK(r1[2] == 0.0);

    CategoricalDist r2 = residual_dist(CategoricalDist{{0.7, 0.3}}, CategoricalDist{{0.3, 0.7}});
    CHECK(r2[0] == doctest::Approx(1.0).epsilon(1e-12));

    // p == q: rejection is impossible, residual undefined
    CHECK_THROWS_WITH(residual_dist(CategoricalDist{{0.5, 0.5}}, CategoricalDist{{0.5, 0.5}}),
                      doctest::Contains("degenerate residual"));

    std::mt19937_64 rng(7);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> a(8), b(8);
        double sa = 0, sb = 0;
        for (int j = 0; j < 8; ++j) {
            a[static_cast<size_t>(j)] = to_unit_double(rng()) + 0.01;
            b[static_cast<size_t>(j)] = to_unit_double(rng()) + 0.01;
            sa += a[static_cast<size_t>(j)];
            sb += b[static_cast<size_t>(j)];
        }
        for (int j = 0; j < 8; ++j) {
            a[static_cast<size_t>(j)] /= sa;
            b[static_cast<size_t>(j)] /= sb;
        }
        CategoricalDist p{a}, q{b};
        CategoricalDist r = residual_dist(p, q);
        double sum = 0;
        for (int j = 0; j < 8; ++j) {
            sum += r[j];
            if (r[j] > 0) {
                CHECK(p[j] > q[j]);
            }
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("chain cycle with drafter == target accepts everything") {
    TabularARModel m = random_model(5, 1, 1.0, 3);
    DecodeRng rng = DecodeRng::from_seed(1, 0);
    for (int i = 0; i < 50; ++i) {
        VerifyOutcome out = spec_step_chain(m, m, Context{{1}}, 3, rng, 0.0,
                                            /*stop_at_eos=*/false);
        CHECK(out.accept_len == 3);
        CHECK(out.accepted_tokens.size() == 4); // k accepted + bonus
    }
}

TEST_CASE("chain cycle with disjoint point masses rejects immediately") {
    TabularARModel target = point_model(4, 2);
    TabularARModel drafter = point_model(4, 0);
    DecodeRng rng = DecodeRng::from_seed(2, 0);
    for (int i = 0; i < 50; ++i) {
        VerifyOutcome out = spec_step_chain(target, drafter, Context{}, 3, rng, 0.0, false);
        CHECK(out.accept_len == 0);
        REQUIRE(out.accepted_tokens.size() == 1);
        CHECK(out.accepted_tokens[0] == 2); // replacement from the residual
    }
}

TEST_CASE("verify outcome invariants and recorded logprobs") {
    TabularARModel target = random_model(4, 2, 1.2, 5);
    TabularARModel drafter = random_model(4, 1, 1.2, 6);
    DecodeRng rng = DecodeRng::from_seed(3, 0);
    for (int i = 0; i < 200; ++i) {
        VerifyOutcome out = spec_step_chain(target, drafter, Context{{1, 2}}, 3, rng, 0.3, false);
        CHECK(out.accept_len <= static_cast<int>(out.draft_records.size()));
        CHECK(out.accepted_tokens.size() == static_cast<size_t>(out.accept_len) + 1);
        for (const auto & rec : out.draft_records) {
            Context c{{1, 2}};
            for (int t : rec.prefix_ext) {
                c.push(t);
            }
            CHECK(std::abs(rec.logq - drafter.logprob(c, rec.token, 0.3)) < 1e-12);
            CHECK(std::abs(rec.logp - target.logprob(c, rec.token, 0.3)) < 1e-12);
        }
    }
}

TEST_CASE("tree with t=1 replays the chain cycle exactly") {
    TabularARModel target = random_model(5, 2, 1.0, 8);
    TabularARModel drafter = random_model(5, 1, 1.0, 9);
    for (uint64_t stream = 0; stream < 300; ++stream) {
        DecodeRng r1 = DecodeRng::from_seed(4, stream);
        DecodeRng r2 = DecodeRng::from_seed(4, stream);
        VerifyOutcome chain = spec_step_chain(target, drafter, Context{{2}}, 4, r1, 0.1, false);
        VerifyOutcome tree = spec_step_tree(target, drafter, Context{{2}},
                                            SDConfig::tree(2, 1, 2), r2, 0.1, false);
        CHECK(chain.accepted_tokens == tree.accepted_tokens);
        CHECK(chain.accept_len == tree.accept_len);
        CHECK(chain.bonus_token == tree.bonus_token);
    }
}

TEST_CASE("tree with drafter == target accepts the first candidate everywhere") {
    TabularARModel m = random_model(4, 1, 1.0, 10);
    DecodeRng rng = DecodeRng::from_seed(5, 0);
    for (int i = 0; i < 50; ++i) {
        VerifyOutcome out = spec_step_tree(m, m, Context{{0}}, SDConfig::tree(2, 3, 2), rng,
                                           0.0, false);
        CHECK(out.accept_len == 4); // s*n drafted tokens, all accepted
        CHECK(out.accepted_tokens.size() == 5);
    }
}

TEST_CASE("tree single-position distribution matches the target (enumeration)") {
    std::mt19937_64 seed_rng(21);
    for (int t = 1; t <= 3; ++t) {
        std::vector<double> a(4), b(4);
        double sa = 0, sb = 0;
        for (int j = 0; j < 4; ++j) {
            a[static_cast<size_t>(j)] = to_unit_double(seed_rng()) + 0.05;
            b[static_cast<size_t>(j)] = to_unit_double(seed_rng()) + 0.05;
            sa += a[static_cast<size_t>(j)];
            sb += b[static_cast<size_t>(j)];
        }
        for (int j = 0; j < 4; ++j) {
            a[static_cast<size_t>(j)] /= sa;
            b[static_cast<size_t>(j)] /= sb;
        }
        CategoricalDist induced = induced_tree_single_position(CategoricalDist{a},
                                                               CategoricalDist{b}, t);
        for (int j = 0; j < 4; ++j) {
            CHECK(std::abs(induced[j] - a[static_cast<size_t>(j)]) < 1e-9);
        }
    }
}

TEST_CASE("generate: full-sequence SD distribution equals naive decoding (exact DP)") {
    TabularARModel target = random_model(4, 0, 0.9, 30);
    TabularARModel drafter = random_model(4, 0, 0.9, 31);
    const auto sd = enumerate_generate_chain(target, drafter, Context{{0}}, 2, 3, 0.2);
    const auto naive = enumerate_generate_naive(target, Context{{0}}, 3, 0.2);
    CHECK(tv_distance_seq(sd, naive) < 1e-9);
}

TEST_CASE("generate: sampler agrees with the enumeration oracle (Monte Carlo)") {
    TabularARModel target = random_model(3, 0, 0.9, 33);
    TabularARModel drafter = random_model(3, 0, 0.9, 34);
    const auto expected = enumerate_generate_chain(target, drafter, Context{{0}}, 2, 3, 0.0);
    std::map<std::vector<int>, int> counts;
    const int n = 100000;
    for (uint64_t i = 0; i < n; ++i) {
        DecodeRng rng = DecodeRng::from_seed(99, i);
        GenerateResult res =
            generate(target, drafter, Context{{0}}, SDConfig::chain(2), 3, rng, 0.0);
        counts[res.tokens] += 1;
    }
    for (const auto & [seq, prob] : expected) {
        const double mu = n * prob;
        const double sigma = std::sqrt(n * prob * (1 - prob));
        CHECK(std::abs(counts[seq] - mu) < 4.5 * sigma + 1.0);
    }
}

TEST_CASE("generate basics") {
    TabularARModel target = random_model(4, 1, 1.0, 40);
    TabularARModel drafter = random_model(4, 1, 1.0, 41);

    SUBCASE("disabled config takes naive single-token steps") {
        DecodeRng rng = DecodeRng::from_seed(6, 0);
        GenerateResult res =
            generate(target, drafter, Context{{1}}, SDConfig::off(), 5, rng, -50.0);
        CHECK(res.tokens.size() == 5);
        CHECK(res.ledger.size() == 5); // one target event per token
        CHECK(res.accept_lens.empty());
        for (const auto & e : res.ledger.events) {
            CHECK(e.role == ModelRole::Target);
            CHECK(e.positions_evaluated == 1);
        }
    }

    SUBCASE("certain immediate EOS gives a length-1 trajectory") {
        DecodeRng rng = DecodeRng::from_seed(7, 0);
        GenerateResult res =
            generate(target, drafter, Context{{1}}, SDConfig::chain(3), 5, rng, 60.0);
        CHECK(res.tokens.size() == 1);
        CHECK(res.tokens[0] == target.vocab().eos());
        CHECK(res.ended_eos);
    }

    SUBCASE("max_len is never exceeded") {
        for (uint64_t i = 0; i < 200; ++i) {
            DecodeRng rng = DecodeRng::from_seed(8, i);
            GenerateResult res = generate(target, drafter, Context{{0}},
                                          SDConfig::tree(2, 2, 2), 6, rng, -1.0);
            CHECK(res.tokens.size() <= 6);
            if (!res.ended_eos) {
                CHECK(res.tokens.size() == 6);
            }
        }
    }
}

TEST_CASE("mean_accept_len") {
    CHECK(mean_accept_len({0, 1, 2}) == doctest::Approx(1.0));
    CHECK(mean_accept_len({3, 3, 3}) == doctest::Approx(3.0));
    CHECK_THROWS(mean_accept_len({}));

    // drafter == target attains the maximum: every cycle accepts all k
    TabularARModel m = random_model(4, 1, 1.0, 50);
    DecodeRng rng = DecodeRng::from_seed(9, 0);
    GenerateResult res = generate(m, m, Context{{0}}, SDConfig::chain(3), 40, rng, 0.0,
                                  /*stop_at_eos=*/false);
    CHECK(mean_accept_len(res.accept_lens) == doctest::Approx(3.0));
}

TEST_CASE("sd config bookkeeping") {
    CHECK(SDConfig::chain(4).drafted_per_cycle() == 4);
    CHECK(SDConfig::tree(2, 3, 2).drafted_per_cycle() == 12);
    CHECK(SDConfig::off().key() == "off");
    CHECK(SDConfig::tree(2, 1, 2).key() == "s2_t1_n2");
    CHECK(SDConfig::off() == SDConfig::off());
    CHECK(!(SDConfig::tree(1, 1, 2) == SDConfig::tree(2, 1, 1)));
}
