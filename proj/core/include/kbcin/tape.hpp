#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kbcin/tensor.hpp"

namespace kbcin {

// Record of executed differentiable ops. backward() replays the closures in
// exact reverse execution order; a node whose output never received a
// gradient is off the loss path and is skipped. Leaves consumed several
// times accumulate one contribution per consumer.
class Tape {
public:
    void record(const char* op, Tensor output, std::function<void()> backward) {
        nodes_.push_back(Node{op, std::move(output), std::move(backward)});
    }

    // loss must be a finite scalar; seeds its gradient with 1.
    void backward(Tensor loss);

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

    // Name of the first recorded op with a non-finite output, if any.
    std::optional<std::string> first_nonfinite_op() const;

private:
    struct Node {
        const char* op;
        Tensor out;
        std::function<void()> back;
    };
    std::vector<Node> nodes_;
};

}  // namespace kbcin
