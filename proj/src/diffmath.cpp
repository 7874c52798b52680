// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/diffmath.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "emoalign/random.hpp"

namespace emoalign {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t checked_numel(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got shape " + shape_to_string(shape));
  }
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dims must be positive, got shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(checked_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
  }
}

Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    grad_.assign(data_.size(), 0.0);
  } else {
    grad_.clear();
  }
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Tensor& param) {
  Node n;
  n.ref = &param;
  n.bound = &param;
  n.needs_grad = recording_ && param.requires_grad();
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return node_value(nodes_.at(v.id)); }

double Tape::scalar(Var v) const {
  const Tensor& x = value(v);
  if (x.numel() != 1) throw DimensionError("expected a one-element tensor, got " + shape_to_string(x.shape()));
  return x[0];
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.owned = std::move(value);
  if (recording_) {
    n.needs_grad = std::any_of(inputs.begin(), inputs.end(), [this](Var v) { return nodes_[v.id].needs_grad; });
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

std::span<double> Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad.assign(node_value(n).numel(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (value(root).numel() != 1) {
    throw DimensionError("backward root must be a one-element tensor, got " + shape_to_string(value(root).shape()));
  }
  if (!nodes_[root.id].needs_grad) return;
  grad(root)[0] += 1.0;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.bound) {
      auto dst = n.bound->grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  if (B.rank() != 2 || A.cols() != B.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_to_string(A.shape()) + " x " + shape_to_string(B.shape()));
  }
  const std::size_t R = A.rows(), K = A.cols(), C = B.cols();
  Tensor out(A.rank() == 1 ? Shape{C} : Shape{R, C});
  const double* pa = A.data().data();
  const double* pb = B.data().data();
  double* po = out.data().data();
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t k = 0; k < K; ++k) {
      const double av = pa[r * K + k];
      if (av == 0.0) continue;
      const double* brow = pb + k * C;
      double* orow = po + r * C;
      for (std::size_t c = 0; c < C; ++c) orow[c] += av * brow[c];
    }
  }
  return t.record(std::move(out), {a, b}, [a, b, R, K, C](Tape& tp, std::size_t self) {
    const double* g = tp.grad_of(self).data();
    const double* pa = tp.value(a).data().data();
    const double* pb = tp.value(b).data().data();
    if (tp.needs_grad(a)) {
      // dA = G B^T
      double* ga = tp.grad(a).data();
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t k = 0; k < K; ++k) {
          const double* brow = pb + k * C;
          const double* grow = g + r * C;
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c) acc += grow[c] * brow[c];
          ga[r * K + k] += acc;
        }
      }
    }
    if (tp.needs_grad(b)) {
      // dB = A^T G
      double* gb = tp.grad(b).data();
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t k = 0; k < K; ++k) {
          const double av = pa[r * K + k];
          if (av == 0.0) continue;
          const double* grow = g + r * C;
          double* gbrow = gb + k * C;
          for (std::size_t c = 0; c < C; ++c) gbrow[c] += av * grow[c];
        }
      }
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require_same_shape(A, B, "add");
  Tensor out = A;
  out.set_requires_grad(false);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    for (Var v : {a, b}) {
      if (!tp.needs_grad(v)) continue;
      auto gv = tp.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require_same_shape(A, B, "sub");
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] - B[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    if (tp.needs_grad(a)) {
      auto ga = tp.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(b)) {
      auto gb = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require_same_shape(A, B, "mul");
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * B[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    const Tensor& A = tp.value(a);
    const Tensor& B = tp.value(b);
    if (tp.needs_grad(a)) {
      auto ga = tp.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (tp.needs_grad(b)) {
      auto gb = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var add_row_bias(Tape& t, Var x, Var bias) {
  const Tensor& X = t.value(x);
  const Tensor& B = t.value(bias);
  if (B.rank() != 1 || B.cols() != X.cols()) {
    throw DimensionError("add_row_bias: bias " + shape_to_string(B.shape()) + " does not match " +
                         shape_to_string(X.shape()));
  }
  const std::size_t R = X.rows(), C = X.cols();
  Tensor out(X.shape());
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = X[r * C + c] + B[c];
  return t.record(std::move(out), {x, bias}, [x, bias, R, C](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    if (tp.needs_grad(x)) {
      auto gx = tp.grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.needs_grad(bias)) {
      auto gb = tp.grad(bias);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) gb[c] += g[r * C + c];
    }
  });
}

Var scale(Tape& t, Var x, double alpha) {
  const Tensor& X = t.value(x);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = alpha * X[i];
  return t.record(std::move(out), {x}, [x, alpha](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    auto gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += alpha * g[i];
  });
}

Var add_scalar(Tape& t, Var x, double c) {
  const Tensor& X = t.value(x);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = X[i] + c;
  return t.record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    auto gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var relu(Tape& t, Var x) {
  const Tensor& X = t.value(x);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
  // Subgradient 0 at the kink.
  return t.record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    const Tensor& X = tp.value(x);
    auto gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (X[i] > 0.0) gx[i] += g[i];
  });
}

Var sum(Tape& t, Var x) {
  const Tensor& X = t.value(x);
  double s = 0.0;
  for (double v : X.data()) s += v;
  return t.record(Tensor({1}, s), {x}, [x](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    for (double& gx : tp.grad(x)) gx += g;
  });
}

Var sum_scalars(Tape& t, std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("sum_scalars: no inputs");
  double s = 0.0;
  for (Var v : xs) s += t.scalar(v);
  std::vector<Var> inputs(xs.begin(), xs.end());
  return t.record(Tensor({1}, s), xs, [inputs](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    for (Var v : inputs)
      if (tp.needs_grad(v)) tp.grad(v)[0] += g;
  });
}

Var mean_rows(Tape& t, Var x) {
  const Tensor& X = t.value(x);
  const std::size_t R = X.rows(), C = X.cols();
  Tensor out({C});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c] += X[r * C + c];
  const double inv = 1.0 / static_cast<double>(R);
  for (double& v : out.data()) v *= inv;
  return t.record(std::move(out), {x}, [x, R, C, inv](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    auto gx = tp.grad(x);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[c] * inv;
  });
}

Var slice_cols(Tape& t, Var x, std::size_t begin, std::size_t count) {
  const Tensor& X = t.value(x);
  const std::size_t R = X.rows(), C = X.cols();
  if (count == 0 || begin + count > C) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_to_string(X.shape()));
  }
  Tensor out(X.rank() == 1 ? Shape{count} : Shape{R, count});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = X[r * C + begin + c];
  return t.record(std::move(out), {x}, [x, R, C, begin, count](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    auto gx = tp.grad(x);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < count; ++c) gx[r * C + begin + c] += g[r * count + c];
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Tensor& first = t.value(parts[0]);
  const std::size_t R = first.rows();
  std::vector<std::size_t> widths;
  std::size_t C = 0;
  for (Var p : parts) {
    const Tensor& P = t.value(p);
    if (P.rows() != R || P.rank() != first.rank()) {
      throw DimensionError("concat_cols: row mismatch " + shape_to_string(P.shape()) + " vs " +
                           shape_to_string(first.shape()));
    }
    widths.push_back(P.cols());
    C += P.cols();
  }
  Tensor out(first.rank() == 1 ? Shape{C} : Shape{R, C});
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& P = t.value(parts[i]);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < widths[i]; ++c) out[r * C + off + c] = P[r * widths[i] + c];
    off += widths[i];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs, widths, R, C](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    std::size_t off = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (tp.needs_grad(inputs[i])) {
        auto gp = tp.grad(inputs[i]);
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < widths[i]; ++c) gp[r * widths[i] + c] += g[r * C + off + c];
      }
      off += widths[i];
    }
  });
}

Var dropout(Tape& t, Var x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ArgumentError("dropout: probability must be in [0, 1), got " + std::to_string(p));
  if (p == 0.0) return x;
  const Tensor& X = t.value(x);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(X.numel());
  Tensor out(X.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = X[i] * mask[i];
  }
  return t.record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& tp, std::size_t self) {
    auto g = tp.grad_of(self);
    auto gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Tensor& X = t.value(x);
  const Tensor& G = t.value(gain);
  const Tensor& B = t.value(bias);
  const std::size_t R = X.rows(), D = X.cols();
  if (D == 0) throw DimensionError("layer_norm: last dimension is zero");
  if (G.rank() != 1 || G.cols() != D || B.shape() != G.shape()) {
    throw DimensionError("layer_norm: gain " + shape_to_string(G.shape()) + " / bias " + shape_to_string(B.shape()) +
                         " do not match input " + shape_to_string(X.shape()));
  }
  if (!(eps > 0.0)) throw ArgumentError("layer_norm: eps must be positive");
  std::vector<double> xhat(X.numel());
  std::vector<double> inv_std(R);
  Tensor out(X.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = X.data().data() + r * D;
    double mean = 0.0;
    for (std::size_t c = 0; c < D; ++c) mean += row[c];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t c = 0; c < D; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(D);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < D; ++c) {
      xhat[r * D + c] = (row[c] - mean) * inv_std[r];
      out[r * D + c] = xhat[r * D + c] * G[c] + B[c];
    }
  }
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, R, D, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp,
                                                                                              std::size_t self) {
                    auto g = tp.grad_of(self);
                    const Tensor& G = tp.value(gain);
                    if (tp.needs_grad(gain)) {
                      auto gg = tp.grad(gain);
                      for (std::size_t r = 0; r < R; ++r)
                        for (std::size_t c = 0; c < D; ++c) gg[c] += g[r * D + c] * xhat[r * D + c];
                    }
                    if (tp.needs_grad(bias)) {
                      auto gb = tp.grad(bias);
                      for (std::size_t r = 0; r < R; ++r)
                        for (std::size_t c = 0; c < D; ++c) gb[c] += g[r * D + c];
                    }
                    if (tp.needs_grad(x)) {
                      auto gx = tp.grad(x);
                      const double invD = 1.0 / static_cast<double>(D);
                      for (std::size_t r = 0; r < R; ++r) {
                        double mean_gy = 0.0, mean_gy_xhat = 0.0;
                        for (std::size_t c = 0; c < D; ++c) {
                          const double gy = g[r * D + c] * G[c];
                          mean_gy += gy;
                          mean_gy_xhat += gy * xhat[r * D + c];
                        }
                        mean_gy *= invD;
                        mean_gy_xhat *= invD;
                        for (std::size_t c = 0; c < D; ++c) {
                          const double gy = g[r * D + c] * G[c];
                          gx[r * D + c] += inv_std[r] * (gy - mean_gy - xhat[r * D + c] * mean_gy_xhat);
                        }
                      }
                    }
                  });
}

Var softmax_attention(Tape& t, Var q, Var k, Var v) {
  const Tensor& Q = t.value(q);
  const Tensor& K = t.value(k);
  const Tensor& V = t.value(v);
  if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2 || Q.cols() != K.cols() || K.rows() != V.rows()) {
    throw DimensionError("softmax_attention: incompatible shapes Q" + shape_to_string(Q.shape()) + " K" +
                         shape_to_string(K.shape()) + " V" + shape_to_string(V.shape()));
  }
  const std::size_t Tq = Q.rows(), Tk = K.rows(), dh = Q.cols(), dv = V.cols();
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> probs(Tq * Tk);
  for (std::size_t i = 0; i < Tq; ++i) {
    double* p = probs.data() + i * Tk;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < Tk; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < dh; ++c) acc += Q[i * dh + c] * K[j * dh + c];
      p[j] = acc * s;
      mx = std::max(mx, p[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < Tk; ++j) {
      p[j] = std::exp(p[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < Tk; ++j) p[j] /= z;
  }
  Tensor out({Tq, dv});
  for (std::size_t i = 0; i < Tq; ++i)
    for (std::size_t j = 0; j < Tk; ++j) {
      const double pij = probs[i * Tk + j];
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += pij * V[j * dv + c];
    }
  return t.record(
      std::move(out), {q, k, v}, [q, k, v, Tq, Tk, dh, dv, s, probs = std::move(probs)](Tape& tp, std::size_t self) {
        auto g = tp.grad_of(self);
        const Tensor& Q = tp.value(q);
        const Tensor& K = tp.value(k);
        const Tensor& V = tp.value(v);
        if (tp.needs_grad(v)) {
          auto gv = tp.grad(v);
          for (std::size_t i = 0; i < Tq; ++i)
            for (std::size_t j = 0; j < Tk; ++j) {
              const double pij = probs[i * Tk + j];
              for (std::size_t c = 0; c < dv; ++c) gv[j * dv + c] += pij * g[i * dv + c];
            }
        }
        if (!tp.needs_grad(q) && !tp.needs_grad(k)) return;
        // dS = P * (dP - rowsum(dP * P)), scaled by s for the pre-softmax scores.
        std::vector<double> dscore(Tq * Tk);
        for (std::size_t i = 0; i < Tq; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < Tk; ++j) {
            double dp = 0.0;
            for (std::size_t c = 0; c < dv; ++c) dp += g[i * dv + c] * V[j * dv + c];
            dscore[i * Tk + j] = dp;
            dot += dp * probs[i * Tk + j];
          }
          for (std::size_t j = 0; j < Tk; ++j) {
            dscore[i * Tk + j] = probs[i * Tk + j] * (dscore[i * Tk + j] - dot) * s;
          }
        }
        if (tp.needs_grad(q)) {
          auto gq = tp.grad(q);
          for (std::size_t i = 0; i < Tq; ++i)
            for (std::size_t j = 0; j < Tk; ++j) {
              const double d = dscore[i * Tk + j];
              for (std::size_t c = 0; c < dh; ++c) gq[i * dh + c] += d * K[j * dh + c];
            }
        }
        if (tp.needs_grad(k)) {
          auto gk = tp.grad(k);
          for (std::size_t i = 0; i < Tq; ++i)
            for (std::size_t j = 0; j < Tk; ++j) {
              const double d = dscore[i * Tk + j];
              for (std::size_t c = 0; c < dh; ++c) gk[j * dh + c] += d * Q[i * dh + c];
            }
        }
      });
}

namespace {

struct CosineParts {
  double dot, norm_a, norm_b;
};

CosineParts cosine_parts(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw DegenerateError("cosine_similarity: zero-norm argument");
  return {dot, std::sqrt(aa), std::sqrt(bb)};
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const auto p = cosine_parts(a, b);
  return p.dot / (p.norm_a * p.norm_b);
}

Var cosine_similarity(Tape& t, Var a, Var b) {
  const auto p = cosine_parts(t.value(a).data(), t.value(b).data());
  const double c = p.dot / (p.norm_a * p.norm_b);
  return t.record(Tensor({1}, c), {a, b}, [a, b, p, c](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    const Tensor& A = tp.value(a);
    const Tensor& B = tp.value(b);
    const double inv_ab = 1.0 / (p.norm_a * p.norm_b);
    if (tp.needs_grad(a)) {
      auto ga = tp.grad(a);
      const double ka = c / (p.norm_a * p.norm_a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (B[i] * inv_ab - ka * A[i]);
    }
    if (tp.needs_grad(b)) {
      auto gb = tp.grad(b);
      const double kb = c / (p.norm_b * p.norm_b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * (A[i] * inv_ab - kb * B[i]);
    }
  });
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<Var(Tape&)>& f, std::span<Tensor* const> params, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw ArgumentError("grad_check: step must be in [1e-7, 1e-3]");
  for (Tensor* p : params) {
    p->set_requires_grad(true);
  }
  {
    Tape tape;
    Var out = f(tape);
    if (!std::isfinite(tape.scalar(out))) throw NumericError("grad_check: function value is not finite");
    tape.backward(out);
  }
  auto evaluate = [&f]() {
    Tape tape(false);
    const double v = tape.scalar(f(tape));
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return v;
  };
  double worst = 0.0;
  for (Tensor* p : params) {
    auto data = p->data();
    auto grad = p->grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = evaluate();
      data[i] = orig - h;
      const double fm = evaluate();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace emoalign
