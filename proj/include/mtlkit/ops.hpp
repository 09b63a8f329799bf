#pragma once

#include "mtlkit/tensor.hpp"

// Differentiable primitives. Every op validates shapes up front, computes
// the forward value eagerly, and records a backward closure on the graph
// when any input requires gradients. Backward closures accumulate into the
// GradTable (never overwrite).

namespace mtlkit::diffcore {

/// a: [..., m, k] (leading dims flattened), b: [k, n].
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);

/// Batched matmul, a: [B, m, k], b: [B, k, n].
Tensor bmm(Graph& g, const Tensor& a, const Tensor& b);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);

/// x: [..., d] plus bias [d].
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias);

Tensor scale(Graph& g, const Tensor& x, double c);

Tensor relu(Graph& g, const Tensor& x);
Tensor gelu(Graph& g, const Tensor& x);
Tensor tanh_act(Graph& g, const Tensor& x);

/// Softmax over the last axis; overflow-safe via row-max subtraction.
Tensor softmax(Graph& g, const Tensor& x);

/// Layer normalization over the last axis with learned gain/bias.
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Row lookup: out[i, :] = table[ids[i], :], reshaped to batch_shape + [d].
/// Gradients accumulate into the looked-up rows (duplicates sum).
Tensor embedding(Graph& g, const Tensor& table, const std::vector<long>& ids,
                 std::vector<long> batch_shape);

Tensor reshape(Graph& g, const Tensor& x, std::vector<long> shape);
Tensor permute(Graph& g, const Tensor& x, const std::vector<int>& axes);

Tensor sum_all(Graph& g, const Tensor& x);
Tensor mean_all(Graph& g, const Tensor& x);

Tensor concat(Graph& g, const std::vector<Tensor>& parts, int axis);
Tensor slice(Graph& g, const Tensor& x, int axis, long start, long len);

/// Adds a constant (non-differentiable) vector of the same element count.
/// Used for additive attention masks.
Tensor add_const(Graph& g, const Tensor& x, const std::vector<double>& c);

/// Inverted dropout; identity when !train or rate == 0.
Tensor dropout(Graph& g, const Tensor& x, double rate, Rng& rng, bool train);

/// Mean over rows of -log softmax(logits)[label]; logits [b, c].
/// Labels must lie in [0, c).
Tensor softmax_xent(Graph& g, const Tensor& logits, const std::vector<long>& labels);

/// Same, but rows with weight 0 are excluded; the loss averages over total
/// weight. Used for token-level tasks with padding masks.
Tensor softmax_xent_masked(Graph& g, const Tensor& logits, const std::vector<long>& labels,
                           const std::vector<double>& weights);

/// Mean element-wise binary cross-entropy on sigmoid(logits); targets in [0,1].
Tensor bce_with_logits(Graph& g, const Tensor& logits, const std::vector<double>& targets);

/// Mean squared error against constant targets.
Tensor mse(Graph& g, const Tensor& pred, const std::vector<double>& targets);

/// Central finite-difference check of d(f)/d(x) for scalar-valued f.
/// max_coords > 0 subsamples coordinates (deterministically from `seed`).
struct GradCheckReport {
    double max_rel_err = 0.0;
    long worst_coord = -1;
    long coords_checked = 0;
    bool pass = true;
};

using ScalarFn = std::function<Tensor(Graph&)>;

/// f rebuilds the graph from the current contents of x on every call.
/// Relative error denominator is max(|analytic|, |numeric|) floored at 1e-8.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-6,
                           double tol = 1e-4, long max_coords = 0, uint64_t seed = 0);

}  // namespace mtlkit::diffcore
