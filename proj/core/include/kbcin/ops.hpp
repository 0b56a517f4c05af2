#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kbcin/rng.hpp"
#include "kbcin/tape.hpp"
#include "kbcin/tensor.hpp"

namespace kbcin {

// All ops are pure in their inputs; gradients accumulate into input grad
// buffers on Tape::backward. Ops record onto the tape only when some input
// requires a gradient.

// --- element-wise ---
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor scale(Tape& t, const Tensor& a, double c);
Tensor leaky_relu(Tape& t, const Tensor& x, double slope = 0.01);
Tensor elu(Tape& t, const Tensor& x, double alpha = 1.0);
Tensor sigmoid(Tape& t, const Tensor& x);

// --- linear algebra ---
// out[i][j] = sum_k x[i][k] W[k][j] (+ b[j])
Tensor linear_map(Tape& t, const Tensor& x, const Tensor& W, const Tensor& b = Tensor());
Tensor matmul(Tape& t, const Tensor& A, const Tensor& B);
// A[m,k] * B[n,k]^T -> [m,n]
Tensor matmul_nt(Tape& t, const Tensor& A, const Tensor& B);
// M[n,k] * v[k] -> [n]
Tensor matvec(Tape& t, const Tensor& M, const Tensor& v);

// --- shape / gather ---
Tensor reshape(Tape& t, const Tensor& x, std::vector<std::size_t> shape);
Tensor concat_vecs(Tape& t, std::span<const Tensor> parts);
Tensor concat_cols(Tape& t, std::span<const Tensor> parts);
Tensor stack_rows(Tape& t, std::span<const Tensor> rows);
Tensor select_row(Tape& t, const Tensor& X, std::size_t i);
Tensor slice_cols(Tape& t, const Tensor& X, std::size_t start, std::size_t count);
Tensor slice_vec(Tape& t, const Tensor& v, std::size_t start, std::size_t count);
Tensor take_rows(Tape& t, const Tensor& table, std::span<const int> ids);
Tensor broadcast_row(Tape& t, const Tensor& v, std::size_t n);
// X[n,d] with row i scaled by s[i]
Tensor scale_rows(Tape& t, const Tensor& X, const Tensor& s);
// S[i][j] = u[i] + w[j]
Tensor outer_add(Tape& t, const Tensor& u, const Tensor& w);

// --- reductions / normalization ---
// out[j] = max_i X[i][j]; subgradient to the first argmax row per column.
Tensor max_pool_rows(Tape& t, const Tensor& X);
// Kept entries are exp-normalized over the kept set (max-subtracted);
// masked-out entries are exactly 0 and never touch the arithmetic.
Tensor masked_softmax(Tape& t, const Tensor& scores, std::span<const std::uint8_t> mask);
// Row-wise full softmax.
Tensor softmax_rows(Tape& t, const Tensor& S);
// Row-wise softmax over j <= i; entries above the diagonal are exactly 0.
Tensor causal_softmax_rows(Tape& t, const Tensor& S);
Tensor layer_norm_rows(Tape& t, const Tensor& X, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
// Seeded inverted dropout; identity when train is false.
Tensor dropout(Tape& t, const Tensor& x, double p, Rng& rng, bool train);

}  // namespace kbcin
