#pragma once

#include <map>
#include <vector>

#include "respec/model.hpp"

namespace respec {

// Verification-only enumeration oracles. These recompute speculative
// sampling outcomes analytically, without touching the sampler code
// path, so they can stand as independent checks against it.

// Induced single-token distribution of one chain acceptance step:
//   sum_d q(d) min(1, p(d)/q(d)) delta_d + P_reject * r(.)
// accept_perturb deliberately skews the acceptance probability and is
// used as a negative control (a nonzero value must break the identity).
CategoricalDist induced_single_step_chain(const CategoricalDist & p,
                                          const CategoricalDist & q,
                                          double accept_perturb = 0.0);

// Induced single-position distribution of recursive rejection over t
// i.i.d. candidates from q, exhaustively over candidates and
// accept/reject branches. Lossless iff this equals p.
CategoricalDist induced_tree_single_position(const CategoricalDist & p,
                                             const CategoricalDist & q, int t);

// Exact distribution over full emitted sequences (EOS-terminated or
// truncated at max_len) for chain-SD generation with draft length k,
// enumerated over all draft blocks, rejection positions, residual and
// bonus draws. Mirrors generate()'s capping rule.
std::map<std::vector<int>, double> enumerate_generate_chain(
    const TabularARModel & target, const TabularARModel & drafter,
    const Context & prompt, int k, int max_len, double eos_bias = 0.0);

// Exact distribution over full emitted sequences for naive
// autoregressive decoding.
std::map<std::vector<int>, double> enumerate_generate_naive(
    const TabularARModel & target, const Context & prompt, int max_len,
    double eos_bias = 0.0);

double tv_distance_seq(const std::map<std::vector<int>, double> & a,
                       const std::map<std::vector<int>, double> & b);

// Brute-force variance of the product acceptance ratio prod p/q over all
// |V|^|T| token sequences of independent steps, weighted by q.
double brute_force_accept_ratio_variance(
    const std::vector<std::pair<CategoricalDist, CategoricalDist>> & steps);

} // namespace respec
