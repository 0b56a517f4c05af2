#include "kbcin/adamw.hpp"

#include <cmath>

namespace kbcin {

double AdamW::clip_gradients(std::span<const NamedTensor> params, double clip_norm) {
    double norm2 = 0.0;
    for (const auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        for (const double g : p.grad_view()) norm2 += g * g;
    }
    const double norm = std::sqrt(norm2);
    if (clip_norm > 0.0 && norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (const auto& [name, p] : params) {
            if (!p.has_grad()) continue;
            for (double& g : const_cast<Tensor&>(p).grad()) g *= scale;
        }
    }
    return norm;
}

void AdamW::step(std::span<const NamedTensor> params) {
    if (cfg_.clip_norm > 0.0) clip_gradients(params, cfg_.clip_norm);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, p] : params) {
        Tensor param = p;
        Slot& slot = state_[param.id()];
        if (slot.m.empty()) {
            slot.m.assign(param.size(), 0.0);
            slot.v.assign(param.size(), 0.0);
        }
        auto& theta = param.mutable_values();
        const bool has_grad = param.has_grad();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = has_grad ? param.grad_view()[i] : 0.0;
            if (!std::isfinite(g)) {
                throw NumericError("AdamW: non-finite gradient in parameter '" + name + "'");
            }
            slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
            slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = slot.m[i] / bc1;
            const double v_hat = slot.v[i] / bc2;
            theta[i] -= cfg_.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                                              cfg_.weight_decay * theta[i]);
        }
    }
}

void zero_all_grads(std::span<const NamedTensor> params) {
    for (const auto& [name, p] : params) const_cast<Tensor&>(p).zero_grad();
}

}  // namespace kbcin
