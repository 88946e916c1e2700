#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "respec/rng.hpp"

namespace respec {

// Token vocabulary. The last id (size-1) is reserved as end-of-sequence,
// but EOS is otherwise an ordinary token: generation stops on emission
// or at max length.
struct Vocabulary {
    int size = 2;

    int eos() const { return size - 1; }
    bool valid_token(int t) const { return t >= 0 && t < size; }
};

// A normalized probability vector over the vocabulary.
struct CategoricalDist {
    std::vector<double> probs;

    int size() const { return static_cast<int>(probs.size()); }
    double operator[](int i) const { return probs[static_cast<size_t>(i)]; }

    // Throws std::invalid_argument unless entries are nonnegative and
    // sum to 1 within 1e-12.
    void validate() const;
};

// Inverse-CDF draw using a single uniform variate.
int sample_from(const CategoricalDist & dist, double u);

double tv_distance(const CategoricalDist & a, const CategoricalDist & b);

// Realized token prefix. Must not contain tokens after end-of-sequence.
struct Context {
    std::vector<int> tokens;

    Context() = default;
    explicit Context(std::vector<int> t) : tokens(std::move(t)) {}

    void push(int tok) { tokens.push_back(tok); }
    size_t length() const { return tokens.size(); }
};

// Tabular autoregressive token model of fixed context order m.
// The next-token distribution for a context is softmax(row / tau) where
// the row is indexed by the last m tokens, left-padded with token 0.
// Immutable once constructed; updates build a new model with version+1.
class TabularARModel {
public:
    TabularARModel(Vocabulary vocab, int order, std::vector<double> logits,
                   double temperature, int version = 0);

    static TabularARModel zeros(Vocabulary vocab, int order, double temperature);
    static TabularARModel random(Vocabulary vocab, int order, double temperature,
                                 double scale, std::mt19937_64 & rng);

    const Vocabulary & vocab() const { return vocab_; }
    int order() const { return order_; }
    double temperature() const { return temperature_; }
    int version() const { return version_; }
    const std::vector<double> & logits() const { return logits_; }
    size_t num_rows() const { return num_rows_; }

    // Row index for the last `order` tokens of ctx (left-padded with 0).
    size_t row_index(const Context & ctx) const;

    // eos_bias is an additive logit shift on the EOS token, applied at
    // evaluation time (request-level hazard, not part of the weights).
    CategoricalDist next_dist(const Context & ctx, double eos_bias = 0.0) const;
    std::vector<double> next_logprobs(const Context & ctx, double eos_bias = 0.0) const;
    double logprob(const Context & ctx, int token, double eos_bias = 0.0) const;

    int sample(const Context & ctx, double u, double eos_bias = 0.0) const;

    // Gradient-step constructor: returns a copy with `delta` added to the
    // logits table and the version bumped.
    TabularARModel with_logits_delta(const std::vector<double> & delta) const;
    TabularARModel with_logits(std::vector<double> new_logits) const;

    nlohmann::json to_json() const;
    static TabularARModel from_json(const nlohmann::json & j);

private:
    Vocabulary vocab_;
    int order_ = 0;
    double temperature_ = 1.0;
    int version_ = 0;
    size_t num_rows_ = 1;
    std::vector<double> logits_; // num_rows_ x V, row-major
};

std::vector<double> softmax(const std::vector<double> & logits, double temperature);

} // namespace respec
