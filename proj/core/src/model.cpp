#include "respec/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace respec {

void CategoricalDist::validate() const {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) {
            throw std::invalid_argument("CategoricalDist: negative entry");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument("CategoricalDist: entries do not sum to 1");
    }
}

int sample_from(const CategoricalDist & dist, double u) {
    double cum = 0.0;
    const int n = dist.size();
    for (int i = 0; i < n; ++i) {
        cum += dist[i];
        if (u < cum) {
            return i;
        }
    }
    // u landed in the rounding slack at the top of the CDF; return the
    // last token with nonzero mass.
    for (int i = n - 1; i >= 0; --i) {
        if (dist[i] > 0.0) {
            return i;
        }
    }
    throw std::invalid_argument("sample_from: all-zero distribution");
}

double tv_distance(const CategoricalDist & a, const CategoricalDist & b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("tv_distance: size mismatch");
    }
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        s += std::abs(a[i] - b[i]);
    }
    return 0.5 * s;
}

std::vector<double> softmax(const std::vector<double> & logits, double temperature) {
    std::vector<double> out(logits.size());
    double max_l = -std::numeric_limits<double>::infinity();
    for (double z : logits) {
        max_l = std::max(max_l, z / temperature);
    }
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] / temperature - max_l);
        sum += out[i];
    }
    for (double & p : out) {
        p /= sum;
    }
    return out;
}

static size_t pow_size(int base, int exp) {
    size_t r = 1;
    for (int i = 0; i < exp; ++i) {
        r *= static_cast<size_t>(base);
    }
    return r;
}

TabularARModel::TabularARModel(Vocabulary vocab, int order, std::vector<double> logits,
                               double temperature, int version)
    : vocab_(vocab), order_(order), temperature_(temperature), version_(version),
      logits_(std::move(logits)) {
    if (vocab_.size < 2) {
        throw std::invalid_argument("TabularARModel: vocab size must be >= 2");
    }
    if (order_ < 0) {
        throw std::invalid_argument("TabularARModel: negative order");
    }
    if (!(temperature_ > 0.0)) {
        throw std::invalid_argument("TabularARModel: temperature must be positive");
    }
    num_rows_ = pow_size(vocab_.size, order_);
    if (logits_.size() != num_rows_ * static_cast<size_t>(vocab_.size)) {
        throw std::invalid_argument("TabularARModel: logits table has wrong shape");
    }
}

TabularARModel TabularARModel::zeros(Vocabulary vocab, int order, double temperature) {
    size_t n = pow_size(vocab.size, order) * static_cast<size_t>(vocab.size);
    return TabularARModel(vocab, order, std::vector<double>(n, 0.0), temperature);
}

TabularARModel TabularARModel::random(Vocabulary vocab, int order, double temperature,
                                      double scale, std::mt19937_64 & rng) {
    size_t n = pow_size(vocab.size, order) * static_cast<size_t>(vocab.size);
    std::vector<double> logits(n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double & z : logits) {
        z = scale * gauss(rng);
    }
    return TabularARModel(vocab, order, std::move(logits), temperature);
}

size_t TabularARModel::row_index(const Context & ctx) const {
    size_t idx = 0;
    const size_t len = ctx.tokens.size();
    for (int i = 0; i < order_; ++i) {
        // window position i is the (order - i)-th token from the end,
        // left-padded with token 0
        const size_t back = static_cast<size_t>(order_ - i);
        int tok = 0;
        if (len >= back) {
            tok = ctx.tokens[len - back];
        }
        if (!vocab_.valid_token(tok)) {
            throw std::invalid_argument("row_index: token out of vocabulary");
        }
        idx = idx * static_cast<size_t>(vocab_.size) + static_cast<size_t>(tok);
    }
    return idx;
}

CategoricalDist TabularARModel::next_dist(const Context & ctx, double eos_bias) const {
    const size_t row = row_index(ctx);
    const size_t V = static_cast<size_t>(vocab_.size);
    std::vector<double> z(logits_.begin() + static_cast<long>(row * V),
                          logits_.begin() + static_cast<long>((row + 1) * V));
    z[V - 1] += eos_bias;
    return CategoricalDist{softmax(z, temperature_)};
}

std::vector<double> TabularARModel::next_logprobs(const Context & ctx, double eos_bias) const {
    CategoricalDist d = next_dist(ctx, eos_bias);
    std::vector<double> out(d.probs.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = std::log(d.probs[i]); // -inf for zero mass
    }
    return out;
}

double TabularARModel::logprob(const Context & ctx, int token, double eos_bias) const {
    if (!vocab_.valid_token(token)) {
        throw std::invalid_argument("logprob: token out of vocabulary");
    }
    return std::log(next_dist(ctx, eos_bias)[token]);
}

int TabularARModel::sample(const Context & ctx, double u, double eos_bias) const {
    return sample_from(next_dist(ctx, eos_bias), u);
}

TabularARModel TabularARModel::with_logits_delta(const std::vector<double> & delta) const {
    if (delta.size() != logits_.size()) {
        throw std::invalid_argument("with_logits_delta: shape mismatch");
    }
    std::vector<double> z = logits_;
    for (size_t i = 0; i < z.size(); ++i) {
        z[i] += delta[i];
    }
    return TabularARModel(vocab_, order_, std::move(z), temperature_, version_ + 1);
}

TabularARModel TabularARModel::with_logits(std::vector<double> new_logits) const {
    return TabularARModel(vocab_, order_, std::move(new_logits), temperature_, version_ + 1);
}

nlohmann::json TabularARModel::to_json() const {
    return nlohmann::json{
        {"vocab_size", vocab_.size},
        {"order", order_},
        {"temperature", temperature_},
        {"logits", logits_},
    };
}

TabularARModel TabularARModel::from_json(const nlohmann::json & j) {
    return TabularARModel(
        Vocabulary{j.at("vocab_size").get<int>()},
        j.at("order").get<int>(),
        j.at("logits").get<std::vector<double>>(),
        j.at("temperature").get<double>());
}

} // namespace respec
