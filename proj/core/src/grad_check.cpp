#include "kbcin/grad_check.hpp"

#include <cmath>

namespace kbcin {

namespace {

double eval_scalar(const std::function<Tensor(Tape&)>& build) {
    Tape tape;
    const Tensor loss = build(tape);
    const double v = loss.item();
    if (!std::isfinite(v)) {
        const auto op = tape.first_nonfinite_op();
        throw NumericError("grad_check: non-finite value produced by op '" +
                           op.value_or("<loss>") + "'");
    }
    return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build,
                           std::span<const NamedTensor> params, double eps) {
    for (const auto& [name, p] : params) {
        const_cast<Tensor&>(p).zero_grad();
    }

    Tape tape;
    Tensor loss = build(tape);
    if (!std::isfinite(loss.item())) {
        const auto op = tape.first_nonfinite_op();
        throw NumericError("grad_check: non-finite value produced by op '" +
                           op.value_or("<loss>") + "'");
    }
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, p] : params) {
        analytic.push_back(p.has_grad() ? p.grad_view() : std::vector<double>(p.size(), 0.0));
    }

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi].second;
        auto& v = p.mutable_values();
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double saved = v[k];
            v[k] = saved + eps;
            const double fp = eval_scalar(build);
            v[k] = saved - eps;
            const double fm = eval_scalar(build);
            v[k] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi][k];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            ++report.entries_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params[pi].first;
                report.worst_index = k;
            }
        }
    }
    return report;
}

}  // namespace kbcin
