#include "kbcin/tape.hpp"

#include <cmath>

namespace kbcin {

void Tape::backward(Tensor loss) {
    if (loss.size() != 1) {
        throw DimensionError("Tape::backward: loss must be scalar, got shape " + loss.shape_str());
    }
    if (!std::isfinite(loss.item())) {
        throw NumericError("Tape::backward: loss is not finite");
    }
    loss.grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->out.has_grad()) it->back();
    }
}

std::optional<std::string> Tape::first_nonfinite_op() const {
    for (const Node& n : nodes_) {
        if (!n.out.all_finite()) return std::string(n.op);
    }
    return std::nullopt;
}

}  // namespace kbcin
