#include "kbcin/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace kbcin {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (const std::size_t d : shape) n *= d;
    return n;
}
}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    Tensor t;
    t.s_ = std::make_shared<State>();
    t.s_->shape = std::move(shape);
    t.s_->value.assign(shape_product(t.s_->shape), 0.0);
    t.s_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double fill, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.s_->value) v = fill;
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values,
                    bool requires_grad) {
    if (shape_product(shape) != values.size()) {
        throw DimensionError("Tensor::from: data length " + std::to_string(values.size()) +
                             " does not match shape product " +
                             std::to_string(shape_product(shape)));
    }
    Tensor t;
    t.s_ = std::make_shared<State>();
    t.s_->shape = std::move(shape);
    t.s_->value = std::move(values);
    t.s_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows, bool requires_grad) {
    const std::size_t m = rows.size();
    const std::size_t n = m == 0 ? 0 : rows[0].size();
    std::vector<double> flat;
    flat.reserve(m * n);
    for (const auto& r : rows) {
        if (r.size() != n) throw DimensionError("Tensor::from_rows: ragged rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return from({m, n}, std::move(flat), requires_grad);
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows(): tensor is not rank 2, shape " + shape_str());
    return s_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols(): tensor is not rank 2, shape " + shape_str());
    return s_->shape[1];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s_->shape.size(); ++i) {
        if (i) os << 'x';
        os << s_->shape[i];
    }
    os << ']';
    return os.str();
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item(): tensor has " + std::to_string(size()) + " elements");
    return s_->value[0];
}

std::vector<double>& Tensor::grad() const {
    if (s_->grad.empty()) s_->grad.assign(s_->value.size(), 0.0);
    return s_->grad;
}

void Tensor::zero_grad() const {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (const double v : s_->value) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace kbcin
