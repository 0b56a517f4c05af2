#include "kbcin/prediction.hpp"

#include <cmath>

namespace kbcin {

namespace {

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor t = Tensor::zeros({rows, cols}, true);
    for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
    return t;
}

constexpr double kProbClamp = 1e-12;

}  // namespace

PredictorParams PredictorParams::init(std::size_t input_dim,
                                      const std::vector<std::size_t>& hidden,
                                      double dropout_rate, Rng& rng) {
    PredictorParams p;
    p.dropout_rate = dropout_rate;
    std::size_t in = input_dim;
    for (const std::size_t width : hidden) {
        if (width == 0) throw ConfigError("predictor: zero-width hidden layer");
        p.weights.push_back(init_matrix(in, width, rng));
        p.biases.push_back(Tensor::zeros({width}, true));
        in = width;
    }
    p.weights.push_back(init_matrix(in, 1, rng));
    p.biases.push_back(Tensor::zeros({1}, true));
    return p;
}

void PredictorParams::collect_params(const std::string& prefix,
                                     std::vector<NamedTensor>& out) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.emplace_back(prefix + ".w" + std::to_string(l), weights[l]);
        out.emplace_back(prefix + ".b" + std::to_string(l), biases[l]);
    }
}

Tensor predict_scores(Tape& tape, const Tensor& features, const PredictorParams& params,
                      double leaky_slope, bool train, Rng* dropout_rng) {
    if (features.cols() != params.weights.front().rows()) {
        throw DimensionError("predict_scores: features " + features.shape_str() +
                             " incompatible with MLP input " +
                             params.weights.front().shape_str());
    }
    Tensor x = features;
    for (std::size_t l = 0; l + 1 < params.weights.size(); ++l) {
        x = leaky_relu(tape, linear_map(tape, x, params.weights[l], params.biases[l]),
                       leaky_slope);
        if (train && dropout_rng && params.dropout_rate > 0.0) {
            x = dropout(tape, x, params.dropout_rate, *dropout_rng, true);
        }
    }
    const Tensor logits = linear_map(tape, x, params.weights.back(), params.biases.back());
    return sigmoid(tape, reshape(tape, logits, {logits.rows()}));
}

Tensor bce_loss(Tape& tape, const Tensor& scores, const std::vector<std::uint8_t>& labels,
                double pos_weight) {
    if (scores.rank() != 1 || scores.size() != labels.size()) {
        throw DimensionError("bce_loss: scores " + scores.shape_str() + " vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = labels.size();
    if (n == 0) throw PreconditionError("bce_loss: empty");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(scores.at(i), kProbClamp, 1.0 - kProbClamp);
        total += labels[i] ? -pos_weight * std::log(p) : -std::log(1.0 - p);
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n), scores.requires_grad());
    if (out.requires_grad()) {
        tape.record("bce_loss", out, [scores, out, labels, pos_weight, n]() mutable {
            const double g = out.grad()[0] / static_cast<double>(n);
            auto& gs = scores.grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double raw = scores.at(i);
                // constant inside the clamp band
                if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) continue;
                gs[i] += labels[i] ? g * (-pos_weight / raw) : g * (1.0 / (1.0 - raw));
            }
        });
    }
    return out;
}

namespace {

// percent with 2 decimals, in integer hundredths
long long f1_cents(std::size_t tp, std::size_t fp, std::size_t fn) {
    const std::size_t denom = 2 * tp + fp + fn;
    if (denom == 0) return 0;
    const double ratio = 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    return std::llround(ratio * 10000.0);
}

long long macro_cents(long long neg_c, long long pos_c) {
    const long long sum = neg_c + pos_c;
    if (sum % 2 == 0) return sum / 2;
    // odd half-cent: round to the even neighbor
    const long long lo = sum / 2;
    return lo % 2 == 0 ? lo : lo + 1;
}

}  // namespace

double macro_from_pair(double neg_f1, double pos_f1) {
    const long long neg_c = std::llround(neg_f1 * 100.0);
    const long long pos_c = std::llround(pos_f1 * 100.0);
    return static_cast<double>(macro_cents(neg_c, pos_c)) / 100.0;
}

MetricReport f1_metrics(const std::vector<PairPrediction>& predictions, double threshold) {
    if (predictions.empty()) throw PreconditionError("f1_metrics: no predictions");
    MetricCounts c;
    for (const PairPrediction& p : predictions) {
        const bool pred = p.score > threshold;
        if (pred && p.label == 1) ++c.tp;
        else if (pred && p.label == 0) ++c.fp;
        else if (!pred && p.label == 1) ++c.fn;
        else ++c.tn;
    }
    const long long pos_c = f1_cents(c.tp, c.fp, c.fn);
    // negative class: swap the roles of the two labels
    const long long neg_c = f1_cents(c.tn, c.fn, c.fp);
    MetricReport r;
    r.counts = c;
    r.pos_f1 = static_cast<double>(pos_c) / 100.0;
    r.neg_f1 = static_cast<double>(neg_c) / 100.0;
    r.macro_f1 = static_cast<double>(macro_cents(neg_c, pos_c)) / 100.0;
    return r;
}

}  // namespace kbcin
