// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors and a small reverse-mode differentiation tape.
//
// Only the operations the projector network and the training objectives need
// are provided. Every op records a backward closure on the tape; backward()
// replays the tape in reverse recording order, so for identical inputs the
// accumulated gradients are bit-identical from run to run.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emoalign/errors.hpp"

namespace emoalign {

class Rng;

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Row-major float64 tensor of rank 1 or 2 with an optional gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  /// Leading extent; a rank-1 tensor is a single row.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  /// Trailing extent.
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool requires_grad() const { return requires_grad_; }
  /// Enabling allocates a zeroed gradient buffer of the same shape.
  void set_requires_grad(bool on);
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  void zero_grad();

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Operation recorder for reverse-mode differentiation.
///
/// A tape belongs to one thread. Values live on the tape except for bound
/// parameters, which are referenced in place and receive their gradients in
/// Tensor::grad() when backward() runs.
class Tape {
 public:
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf holding a copy of `value`; never receives gradients.
  Var constant(Tensor value);
  /// Leaf referencing `value` without copying; never receives gradients.
  /// The referenced tensor must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Leaf bound to `param`. If the tensor requires grad, backward() adds
  /// into param.grad(). The tensor must outlive the tape.
  Var parameter(Tensor& param);

  const Tensor& value(Var v) const;
  double scalar(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and propagates to every bound parameter.
  /// The root must hold exactly one element.
  void backward(Var root);

  // Op implementation surface.
  using Backward = std::function<void(Tape&, std::size_t)>;
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);
  /// Gradient buffer of a node, allocated on first access.
  std::span<double> grad(Var v);
  std::span<const double> grad_of(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor* bound = nullptr;
    std::vector<double> grad;
    bool needs_grad = false;
    Backward backward;
  };
  const Tensor& node_value(const Node& n) const { return n.ref ? *n.ref : n.owned; }

  std::vector<Node> nodes_;
  bool recording_;
};

// ---------------------------------------------------------------------------
// Operations. All shapes are checked and mismatches raise DimensionError.

/// a[R x K] * b[K x C]. A rank-1 `a` is treated as one row and yields rank 1.
Var matmul(Tape& t, Var a, Var b);
/// Elementwise sum of equal shapes.
Var add(Tape& t, Var a, Var b);
/// Elementwise difference of equal shapes.
Var sub(Tape& t, Var a, Var b);
/// Elementwise product of equal shapes.
Var mul(Tape& t, Var a, Var b);
/// x[R x C] + bias[C] broadcast over rows.
Var add_row_bias(Tape& t, Var x, Var bias);
Var scale(Tape& t, Var x, double alpha);
Var add_scalar(Tape& t, Var x, double c);
Var relu(Tape& t, Var x);
/// Sum of all elements, as a one-element tensor.
Var sum(Tape& t, Var x);
/// Sum of one-element tensors, accumulated in the given order.
Var sum_scalars(Tape& t, std::span<const Var> xs);
/// Column means of x[R x C], shape [C].
Var mean_rows(Tape& t, Var x);
Var slice_cols(Tape& t, Var x, std::size_t begin, std::size_t count);
Var concat_cols(Tape& t, std::span<const Var> parts);
/// Inverted dropout with keep-mask drawn from `rng`; identity when p == 0.
Var dropout(Tape& t, Var x, double p, Rng& rng);

/// Normalizes each row of x to zero mean and unit (biased) variance over the
/// last axis, then applies gain and bias.
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);

/// softmax(Q K^T / sqrt(d_h)) V for one head. Q, K, V are [T x d_h].
Var softmax_attention(Tape& t, Var q, Var k, Var v);

/// Cosine similarity of two equal-length tensors (flattened), shape [1].
/// Raises DegenerateError if either argument has zero norm.
Var cosine_similarity(Tape& t, Var a, Var b);

/// Value-only cosine similarity with the same contract.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Central finite-difference check of every element of `params`.
///
/// `f` records a scalar function of the parameters on the provided tape. The
/// analytic gradient comes from one backward pass; each element is then
/// perturbed by +-h and `f` re-evaluated. Returns the worst
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<Var(Tape&)>& f, std::span<Tensor* const> params,
                  double h = 1e-5);

}  // namespace emoalign
