#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "bfvae/tensor.hpp"

namespace bfvae::nn {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor2& value() const;
  const Tensor2& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape over a fixed op vocabulary. Nodes are appended during the
/// forward pass; backward() walks them in reverse order once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor2 value);
  Var parameter(Tensor2 value);

  /// Seeds d(out)/d(out) = 1 for a 1x1 node and propagates.
  void backward(Var out);

  const Tensor2& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor2& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Op implementation surface.
  Var push(Tensor2 value, bool requires_grad, BackwardFn fn);
  /// Gradient buffer of a node, zero-allocated on first use.
  Tensor2& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
/// aᵀ b without materializing the transpose.
Var matmul_tn(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (n×c) plus a 1×c row broadcast over rows.
Var add_row(Var a, Var row);
Var sub_row(Var a, Var row);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var mul_const(Var a, const Tensor2& c);
Var add_const(Var a, const Tensor2& c);

Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var softplus(Var a);
Var square(Var a);
Var abs(Var a);

/// 1x1 sum of all entries.
Var sum(Var a);
/// 1x1 mean of all entries.
Var mean(Var a);
/// n×1: per-row sum across columns.
Var row_sum(Var a);
/// 1×c: per-column mean across rows.
Var col_mean(Var a);

Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t begin, std::size_t count);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }

}  // namespace bfvae::nn
