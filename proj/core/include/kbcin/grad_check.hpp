#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kbcin/tape.hpp"
#include "kbcin/tensor.hpp"

namespace kbcin {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t entries_checked = 0;
};

using NamedTensor = std::pair<std::string, Tensor>;

// Compares the analytic gradient of a scalar-valued computation against
// central finite differences:
//   rel = |analytic - numeric| / max(1, |analytic|, |numeric|)
// `build` must construct the forward graph afresh on the given tape from
// the current parameter values.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build,
                           std::span<const NamedTensor> params, double eps = 1e-5);

}  // namespace kbcin
