#pragma once

#include <map>
#include <span>
#include <vector>

#include "kbcin/grad_check.hpp"

namespace kbcin {

struct AdamWConfig {
    double learning_rate = 4e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 3e-4;
    double clip_norm = 0.0;  // 0 disables clipping
};

// Adam with decoupled weight decay. Aborts on a non-finite gradient,
// naming the parameter.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void step(std::span<const NamedTensor> params);
    std::size_t step_count() const { return t_; }

    // Scales all gradients so the global norm does not exceed clip_norm.
    // Returns the pre-clip norm.
    static double clip_gradients(std::span<const NamedTensor> params, double clip_norm);

private:
    struct Slot {
        std::vector<double> m, v;
    };
    AdamWConfig cfg_;
    std::map<const void*, Slot> state_;
    std::size_t t_ = 0;
};

void zero_all_grads(std::span<const NamedTensor> params);

}  // namespace kbcin
