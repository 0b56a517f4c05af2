#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "kbcin/errors.hpp"

namespace kbcin {

// Dense 64-bit float tensor, row major. Values are immutable after
// construction except through mutable_values() (parameter updates and
// finite-difference probes); the gradient buffer is the one accumulator.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double fill, bool requires_grad = false);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    // Convenience for tests: rows of a rank-2 tensor.
    static Tensor from_rows(const std::vector<std::vector<double>>& rows,
                            bool requires_grad = false);

    bool defined() const { return static_cast<bool>(s_); }
    const std::vector<std::size_t>& shape() const { return s_->shape; }
    std::size_t size() const { return s_->value.size(); }
    std::size_t rank() const { return s_->shape.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    bool same_shape(const Tensor& o) const { return s_->shape == o.s_->shape; }
    std::string shape_str() const;

    bool requires_grad() const { return s_->requires_grad; }

    const std::vector<double>& values() const { return s_->value; }
    std::vector<double>& mutable_values() { return s_->value; }
    double at(std::size_t i) const { return s_->value[i]; }
    double at(std::size_t i, std::size_t j) const { return s_->value[i * cols() + j]; }
    double item() const;

    // The gradient buffer is the one mutable accumulator; it is reachable
    // through const handles so backward closures can add their contribution.
    bool has_grad() const { return !s_->grad.empty(); }
    // Allocates a zero-filled accumulator on first use.
    std::vector<double>& grad() const;
    const std::vector<double>& grad_view() const { return s_->grad; }
    void zero_grad() const;

    bool all_finite() const;

    // Identity shared between handles; used to key optimizer state.
    const void* id() const { return s_.get(); }
    bool same_storage(const Tensor& o) const { return s_ == o.s_; }

private:
    struct State {
        std::vector<std::size_t> shape;
        std::vector<double> value;
        bool requires_grad = false;
        std::vector<double> grad;
    };
    std::shared_ptr<State> s_;
};

}  // namespace kbcin
