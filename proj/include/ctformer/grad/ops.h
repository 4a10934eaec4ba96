#ifndef CTFORMER_GRAD_OPS_H_
#define CTFORMER_GRAD_OPS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "ctformer/grad/tensor.h"

// Differentiable operations. Every op computes its forward value eagerly and,
// when a tape is active and some input requires gradients, records an exact
// analytic backward step. Shape errors throw std::invalid_argument naming both
// shapes.
namespace ctformer::grad {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// a[m x n] + v[n] on every row.
Tensor add_row(const Tensor& a, const Tensor& v);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// 1 - a
Tensor one_minus(const Tensor& a);

// a[m x k] . b[k x n]. Rank-1 operands are promoted to 1 x k (left) and the
// result keeps rank 1 when a is rank 1.
Tensor matmul(const Tensor& a, const Tensor& b);
// x . W^T + bias for W[out x in]; x is [m x in] or a rank-1 [in]. bias may be
// undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Concatenation along the last axis. Operands share every leading dimension.
Tensor concat(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
// Row r of a rank-2 tensor as a rank-1 tensor.
Tensor row(const Tensor& a, std::size_t r);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
// Rank-1 tensors of equal length stacked into [count x n].
Tensor stack_rows(const std::vector<Tensor>& rows);
// Zero-pads a rank-2 tensor at the bottom and right.
Tensor pad(const Tensor& a, std::size_t rows, std::size_t cols);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);

// Softmax along each row of a rank-2 tensor (rank-1 is a single row) over the
// positions where allowed != 0. Disallowed positions are exactly 0. A row with
// no allowed position is an error.
Tensor row_softmax_masked(const Tensor& logits, std::span<const std::uint8_t> allowed);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Rank-2 reductions. axis 0 collapses rows (column sums, length cols);
// axis 1 collapses columns (row sums, length rows).
Tensor sum_axis(const Tensor& a, int axis);
Tensor mean_axis(const Tensor& a, int axis);
Tensor dot(const Tensor& a, const Tensor& b);

// Per-row normalization followed by gamma * x_hat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

inline constexpr double kProbabilityClamp = 1e-7;

// -[w*y*ln p + (1-y)*ln(1-p)] for a single probability. p is clamped to
// [1e-7, 1 - 1e-7]; the clamped region has zero gradient.
Tensor binary_cross_entropy(const Tensor& probability, double target, double positive_weight = 1.0);

// Mean of |a| over entries where mask != 0; 0 when the mask is empty.
Tensor l1_masked(const Tensor& a, std::span<const std::uint8_t> mask);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);

}  // namespace ctformer::grad

#endif  // CTFORMER_GRAD_OPS_H_
