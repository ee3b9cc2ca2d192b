// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "retr/autodiff/tensor.hpp"

namespace retr::ad {

/// Sparse tap table: output row p is the weighted sum over K taps of rows of
/// the source tensor. index -1 marks a dead tap (weight ignored, treated as
/// zero contribution). Built by the geometry interpolators and by im2col.
struct GatherTaps {
  int64_t rows = 0;  // P
  int taps = 0;      // K
  std::vector<int32_t> index;  // P*K, row index into source or -1
  std::vector<double> weight;  // P*K
};

/// Index table for gather_concat: output row p is the concatenation of K
/// source rows (zeros where index is -1).
struct GatherIndex {
  int64_t rows = 0;
  int taps = 0;
  std::vector<int32_t> index;  // P*K
};

/// Gradients keyed by tape value id, as produced by Tape::backward.
class Gradients {
 public:
  explicit Gradients(size_t n) : slots_(n) {}

  /// Gradient of a tape-registered tensor; throws if the tensor is a
  /// constant. Returns a zero tensor when no gradient reached it.
  Tensor grad(const Tensor& t) const;

  /// Null when t is constant or received no gradient.
  const std::vector<double>* find(const Tensor& t) const;

  std::vector<std::vector<double>>& slots() { return slots_; }
  const std::vector<std::vector<double>>& slots() const { return slots_; }

 private:
  std::vector<std::vector<double>> slots_;
};

/// Define-by-run reverse-mode tape over Tensors.
///
/// Every operation validates shapes, rejects non-finite inputs eagerly, and
/// records a node only when an input is tape-registered. Nodes are stored in
/// execution order, so the reverse sweep is a single topological pass that
/// visits each node exactly once. A Tape (and the tensors bound to it) is
/// single-threaded; distinct tapes may run concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a tensor value as a differentiable leaf of this tape.
  Tensor leaf(const Tensor& value);

  // ---- elementwise (broadcasting: equal rank with size-1 expansion, or a
  //      one-element operand against anything) ----
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
  Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }

  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);
  Tensor sqrt(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor abs(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor softplus(const Tensor& x);

  // ---- linear algebra / structure ----
  Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n]
  Tensor transpose(const Tensor& x);                // 2-D
  Tensor reshape(const Tensor& x, Shape shape);
  Tensor broadcast_to(const Tensor& x, const Shape& shape);
  Tensor concat(const std::vector<Tensor>& parts, int axis);
  Tensor slice(const Tensor& x, int axis, int start, int len);

  // ---- reductions ----
  Tensor sum(const Tensor& x);             // scalar [1]
  Tensor sum_axis(const Tensor& x, int axis);
  Tensor mean(const Tensor& x);
  Tensor mean_axis(const Tensor& x, int axis);
  Tensor max_reduce(const Tensor& x, int axis);  // gradient to first argmax

  /// Numerically stabilized softmax along `axis` (max subtraction).
  Tensor softmax(const Tensor& x, int axis);

  // ---- sparse / fused kernels ----

  /// out[p,:] = sum_k w[p,k] * x[index[p,k], :], differentiable w.r.t. x.
  Tensor weighted_gather(const Tensor& x, const GatherTaps& taps);

  /// out[p, k*C:(k+1)*C] = x[index[p,k], :] (zeros for -1). im2col builds on
  /// this.
  Tensor gather_concat(const Tensor& x, const GatherIndex& idx);

  /// Multi-head scaled dot-product attention over already-projected q/k/v.
  /// q:[Q,D] k,v:[S,D], D divisible by heads, per-head scale 1/sqrt(D/H).
  /// mask (Q*S row-major, 1 = permitted) restricts attention structurally:
  /// masked pairs are never touched in either the forward or backward loops,
  /// so outputs and gradients are exactly independent of masked entries.
  /// Returns (concatenated head outputs [Q,D], attention [H,Q,S]).
  std::pair<Tensor, Tensor> masked_attention(const Tensor& q, const Tensor& k,
                                             const Tensor& v, int heads,
                                             const std::vector<uint8_t>* mask);

  /// Per-row mean/variance across a set of view tensors (each [P,C]) with a
  /// per-view validity mask of length P. Invalid views are excluded; rows
  /// with zero valid views yield 0/0. Contributions are summed in ascending
  /// value order, making the outputs bit-identical under any permutation of
  /// the views.
  std::pair<Tensor, Tensor> view_stats(const std::vector<Tensor>& views,
                                       const std::vector<std::vector<uint8_t>>& valid);

  /// Single-output custom node; the hook unit tests use to inject a
  /// deliberately wrong gradient rule as a negative control.
  Tensor unary_custom(const Tensor& x,
                      const std::function<std::vector<double>(const std::vector<double>&)>& fwd,
                      const std::function<std::vector<double>(const std::vector<double>& x_in,
                                                              const std::vector<double>& out_grad)>& bwd);

  /// Reverse sweep from a scalar loss. Rejects non-scalar losses and losses
  /// not on this tape. Repeatable: each call starts from fresh gradient
  /// buffers and yields bit-identical results.
  Gradients backward(const Tensor& loss) const;

  /// Reverse sweep seeded with explicit output gradients (used to chain a
  /// downstream tape's leaf gradients into this tape).
  Gradients backward_seeded(
      const std::vector<std::pair<Tensor, std::vector<double>>>& seeds) const;

  size_t num_nodes() const { return nodes_.size(); }
  size_t num_values() const { return value_shapes_.size(); }

 private:
  struct BackCtx;
  using BackFn = std::function<void(BackCtx&)>;

  struct Node {
    std::vector<int> out_vids;
    BackFn back;
  };

  Tensor make_value(Shape shape, std::vector<double> data);
  void record(std::vector<int> out_vids, BackFn back);
  bool on_tape(const Tensor& t) const;
  void check_input(const char* op, const Tensor& t) const;

  Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, int kind);
  Tensor unary_op(const char* name, const Tensor& x, int kind);
  Tensor reduce_op(const char* name, const Tensor& x, int axis, bool is_mean);

  std::vector<Node> nodes_;
  std::vector<Shape> value_shapes_;
};

}  // namespace retr::ad
