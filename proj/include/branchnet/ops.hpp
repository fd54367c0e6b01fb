#pragma once

#include <optional>
#include <vector>

#include "branchnet/graph.hpp"

namespace branchnet {

// Differentiable ops. Each takes the active Graph, returns a Var, and records
// a backward closure when recording and at least one input is tracked.

Var add(Graph& g, const Var& a, const Var& b);
Var mul(Graph& g, const Var& a, const Var& b);  // elementwise
Var mul_scalar(Graph& g, const Var& a, float s);
Var relu(Graph& g, const Var& x);

// x: B x H x W x Cin. weight: Cout x KH x KW x Cin (rows = output channels).
// Cross-correlation with zero padding, floor output dims.
Var conv2d(Graph& g, const Var& x, const Var& weight, const std::optional<Var>& bias,
           int stride, int pad);

// gamma/beta: 1x1x1xC. Statistics per channel over all rows jointly.
// Train mode updates running stats in place: r <- (1-momentum)*r + momentum*batch.
Var batchnorm(Graph& g, const Var& x, const Var& gamma, const Var& beta,
              Tensor4& running_mean, Tensor4& running_var, bool training,
              float momentum = 0.1f, float eps = 1e-5f);

Var maxpool(Graph& g, const Var& x, int kernel, int stride, int pad);

// B x H x W x C -> B x 1 x 1 x C. Width is reduced by summing the symmetric
// pairs (w, W-1-w) first so the result is bit-identical under horizontal flip.
Var global_avgpool(Graph& g, const Var& x);

// Flattens H*W*C features. weight: Cout x 1 x 1 x (H*W*C) against flattened x.
Var linear(Graph& g, const Var& x, const Var& weight, const Var& bias);

// Softmax over the channel dimension at each (row, h, w).
Var softmax_channels(Graph& g, const Var& x);

// Branch-group ops. Rows are laid out variant-major: row v*B + b is variant v
// of sample b, with B = rows/R.
Var take_branch(Graph& g, const Var& x, int v, int R);
Var branch_max(Graph& g, const Var& x, int R);   // ties routed to lowest v
Var branch_mean(Graph& g, const Var& x, int R);
Var branch_geo(Graph& g, const Var& x, int R);   // log-space, clamp >= 1e-12

// Per row: divide by the sum over channels (clamped >= 1e-12).
Var l1_normalize_channels(Graph& g, const Var& x);

// Mean over rows of -log(max(probs[row, label], 1e-12)). Output 1x1x1x1.
Var nll_mean(Graph& g, const Var& probs, const std::vector<int>& labels);

Var concat_rows(Graph& g, const Var& a, const Var& b);
Var sum_all(Graph& g, const Var& x);  // 1x1x1x1

}  // namespace branchnet
