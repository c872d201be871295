#pragma once

#include "chargecast/nn/graph.hpp"

#include <span>
#include <vector>

// Differentiable operations recorded on a Graph. Every operation validates
// shapes and throws ConfigError on mismatch.
namespace chargecast::nn {

Var matmul(Graph& g, Var a, Var b);
/// a * b^T
Var matmul_nt(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double factor);
/// Adds the 1 x c row vector `row` to every row of `a`.
Var add_row(Graph& g, Var a, Var row);

Var sigmoid(Graph& g, Var a);
Var tanh(Graph& g, Var a);
/// Row-wise softmax with max subtraction.
Var softmax_rows(Graph& g, Var a);

Var concat_rows(Graph& g, std::span<const Var> parts);
Var slice_rows(Graph& g, Var a, Eigen::Index first, Eigen::Index count);
/// Row-major reshape; `flatten` is reshape to a single row.
Var reshape(Graph& g, Var a, Eigen::Index rows, Eigen::Index cols);
Var flatten(Graph& g, Var a);

/// Sum of squared entries, as a 1x1 node.
Var sum_squares(Graph& g, Var a);
/// Sum of quantile (pinball) losses of a K x tau prediction against a
/// 1 x tau truth, one level per row.
Var pinball_sum(Graph& g, Var pred, const Matrix& truth, std::span<const double> levels);

/// Single-layer LSTM over the rows of `xs` with zero initial state.
/// Gate order in the stacked weights is input, forget, candidate, output.
/// Returns all hidden states, one per row.
Var lstm(Graph& g, Var xs, Var w_ih, Var w_hh, Var bias);

/// Multi-head scaled dot-product attention. Each head attends with its own
/// column slice of Q, K and V and scores are scaled by 1/sqrt(head dim).
/// Head outputs are concatenated column-wise.
Var attention(Graph& g, Var q, Var k, Var v, int head_count);

}  // namespace chargecast::nn
