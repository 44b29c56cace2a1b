#pragma once

#include "heatcast/tensor.hpp"

#include <span>
#include <vector>

namespace heatcast {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
/// Left product with a constant sparse matrix: A * x.
Tensor sparse_matmul(const SparseMatrix& a, const Tensor& x);

// Elementwise (identical shapes, or tensor with scalar)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

/// x[m x n] + bias[n] added to every row. Explicit, not implicit broadcasting.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// Rank 1: softmax over all entries. Rank 2: independently per row.
/// Max-shifted, so invariant to adding a constant per row.
Tensor softmax(const Tensor& x);

/// Per-column max over rows with mask[i] == true. Returns a rank-1 tensor.
/// Backward routes to the argmax row, first index on ties.
Tensor reduce_max_over_set(const Tensor& x, const std::vector<bool>& mask);
Tensor reduce_max_over_set(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Structural
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, Eigen::Index begin, Eigen::Index count);
Tensor slice_cols(const Tensor& x, Eigen::Index begin, Eigen::Index count);
Tensor gather_rows(const Tensor& x, std::span<const Eigen::Index> rows);
/// Stacks a rank-1 (or 1 x n) tensor m times into an m x n matrix.
Tensor tile_rows(const Tensor& v, Eigen::Index m);
/// out[i] = x[i - k], zero outside the range. Used for same-padded temporal convolution.
Tensor shift_rows(const Tensor& x, Eigen::Index k);

// Losses. All return scalars.

/// Huber with beta = 1: summed over columns, averaged over rows.
Tensor smooth_l1(const Tensor& pred, const Matrix& target);
/// Sigmoid cross-entropy on logits, averaged over entries; targets in {0, 1}.
Tensor binary_ce(const Tensor& logits, const Matrix& targets);
/// Cross-entropy of softmax(logits) against a class index (stable log-sum-exp).
Tensor categorical_ce(const Tensor& logits, Eigen::Index target);

}  // namespace heatcast
