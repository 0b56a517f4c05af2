#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kbcin/grad_check.hpp"
#include "kbcin/ops.hpp"

namespace kbcin {

// Causal utterance predictor: MLP over concatenated head outputs, sigmoid
// per candidate. Hidden widths default to [300, 300, 300].
struct PredictorParams {
    std::vector<Tensor> weights;  // one per layer
    std::vector<Tensor> biases;
    double dropout_rate = 0.07;

    static PredictorParams init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                double dropout_rate, Rng& rng);
    void collect_params(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// sigmoid(MLP(feature_i)) per candidate; rows are scored independently.
// Dropout applies to hidden activations at train time only.
Tensor predict_scores(Tape& tape, const Tensor& features, const PredictorParams& params,
                      double leaky_slope, bool train, Rng* dropout_rng);

// Mean over candidates of -[w*y*log p + (1-y)*log(1-p)], probabilities
// clamped at 1e-12 so the loss stays finite.
Tensor bce_loss(Tape& tape, const Tensor& scores, const std::vector<std::uint8_t>& labels,
                double pos_weight = 1.0);

struct PairPrediction {
    std::string dialogue_id;
    int target_index = 0;
    int candidate_index = 0;
    double score = 0.5;
    int label = 0;
};

struct MetricCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Percentages rounded to 2 decimals; macro is the mean of the two rounded
// class F1s (half-to-even on the odd half-cent).
struct MetricReport {
    double neg_f1 = 0.0;
    double pos_f1 = 0.0;
    double macro_f1 = 0.0;
    MetricCounts counts;
};

MetricReport f1_metrics(const std::vector<PairPrediction>& predictions, double threshold = 0.5);
// The arithmetic used by f1_metrics, exposed for checking published rows.
double macro_from_pair(double neg_f1, double pos_f1);

}  // namespace kbcin
