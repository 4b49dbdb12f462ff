#include "bfvae/autodiff.hpp"

#include <cmath>

namespace bfvae::nn {

const Tensor2& Var::value() const { return tape_->value(id_); }
const Tensor2& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw DimensionError("Var::scalar on non-1x1 node");
  return v(0, 0);
}

Var Tape::constant(Tensor2 value) { return push(std::move(value), false, nullptr); }
Var Tape::parameter(Tensor2 value) { return push(std::move(value), true, nullptr); }

Var Tape::push(Tensor2 value, bool requires_grad, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), Tensor2{}, requires_grad, requires_grad ? std::move(fn) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor2& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows())
    n.grad = Tensor2(n.value.rows(), n.value.cols());
  return n.grad;
}

const Tensor2& Tape::grad(std::size_t id) const {
  static const Tensor2 kEmpty;
  const auto& n = nodes_[id];
  return n.grad.size() == n.value.size() && n.value.size() > 0 ? n.grad : kEmpty;
}

void Tape::backward(Var out) {
  if (out.tape() != this) throw Error("Tape::backward: variable from another tape");
  if (value(out.id()).size() != 1) throw DimensionError("Tape::backward: output must be 1x1");
  for (auto& n : nodes_) n.grad = Tensor2{};
  if (!nodes_[out.id()].requires_grad) return;
  grad_buffer(out.id())(0, 0) = 1.0;
  for (std::size_t id = out.id() + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw Error("autodiff: operands on different tapes");
  return *a.tape();
}

bool needs(const Tape& t, Var v) { return t.requires_grad(v.id()); }

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape();
  const Tensor2& x = a.value();
  Tensor2 y(x.rows(), x.cols());
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = fwd(xd[i]);
  const std::size_t ai = a.id();
  return t.push(std::move(y), needs(t, a), [ai, deriv](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    const auto xv = tp.value(ai).data();
    const auto yv = tp.value(self).data();
    auto ga = tp.grad_buffer(ai).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + std::to_string(av.rows()) + "x" + std::to_string(av.cols()) + " * " +
                         std::to_string(bv.rows()) + "x" + std::to_string(bv.cols()));
  }
  Tensor2 y(av.rows(), bv.cols());
  y.eigen().noalias() = av.eigen() * bv.eigen();
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(y), needs(t, a) || needs(t, b), [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).eigen();
    if (tp.requires_grad(ai)) tp.grad_buffer(ai).eigen().noalias() += g * tp.value(bi).eigen().transpose();
    if (tp.requires_grad(bi)) tp.grad_buffer(bi).eigen().noalias() += tp.value(ai).eigen().transpose() * g;
  });
}

Var matmul_tn(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  if (av.rows() != bv.rows()) throw DimensionError("matmul_tn: row counts differ");
  Tensor2 y(av.cols(), bv.cols());
  y.eigen().noalias() = av.eigen().transpose() * bv.eigen();
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(y), needs(t, a) || needs(t, b), [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).eigen();
    if (tp.requires_grad(ai)) tp.grad_buffer(ai).eigen().noalias() += tp.value(bi).eigen() * g.transpose();
    if (tp.requires_grad(bi)) tp.grad_buffer(bi).eigen().noalias() += tp.value(ai).eigen() * g;
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor2 y(a.rows(), a.cols());
  y.eigen() = a.value().eigen() + b.value().eigen();
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(y), needs(t, a) || needs(t, b), [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).eigen();
    if (tp.requires_grad(ai)) tp.grad_buffer(ai).eigen() += g;
    if (tp.requires_grad(bi)) tp.grad_buffer(bi).eigen() += g;
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor2 y(a.rows(), a.cols());
  y.eigen() = a.value().eigen() - b.value().eigen();
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(y), needs(t, a) || needs(t, b), [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).eigen();
    if (tp.requires_grad(ai)) tp.grad_buffer(ai).eigen() += g;
    if (tp.requires_grad(bi)) tp.grad_buffer(bi).eigen() -= g;
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor2 y(a.rows(), a.cols());
  y.eigen() = a.value().eigen().cwiseProduct(b.value().eigen());
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(y), needs(t, a) || needs(t, b), [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).eigen();
    if (tp.requires_grad(ai)) tp.grad_buffer(ai).eigen() += g.cwiseProduct(tp.value(bi).eigen());
    if (tp.requires_grad(bi)) tp.grad_buffer(bi).eigen() += g.cwiseProduct(tp.value(ai).eigen());
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw DimensionError("add_row: row must be 1 x cols(a)");
  Tensor2 y(a.rows(), a.cols());
  y.eigen() = a.value().eigen().rowwise() + row.value().eigen().row(0);
  const std::size_t ai = a.id(), ri = row.id();
  return t.push(std::move(y), needs(t, a) || needs(t, row), [ai, ri](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).eigen();
    if (tp.requires_grad(ai)) tp.grad_buffer(ai).eigen() += g;
    if (tp.requires_grad(ri)) tp.grad_buffer(ri).eigen() += g.colwise().sum();
  });
}

Var sub_row(Var a, Var row) { return add_row(a, scale(row, -1.0)); }

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_const(Var a, const Tensor2& c) {
  Tape& t = *a.tape();
  require_same_shape(a.value(), c, "mul_const");
  Tensor2 y(a.rows(), a.cols());
  y.eigen() = a.value().eigen().cwiseProduct(c.eigen());
  const std::size_t ai = a.id();
  return t.push(std::move(y), needs(t, a), [ai, c](Tape& tp, std::size_t self) {
    tp.grad_buffer(ai).eigen() += tp.grad(self).eigen().cwiseProduct(c.eigen());
  });
}

Var add_const(Var a, const Tensor2& c) {
  Tape& t = *a.tape();
  require_same_shape(a.value(), c, "add_const");
  Tensor2 y(a.rows(), a.cols());
  y.eigen() = a.value().eigen() + c.eigen();
  const std::size_t ai = a.id();
  return t.push(std::move(y), needs(t, a), [ai](Tape& tp, std::size_t self) {
    tp.grad_buffer(ai).eigen() += tp.grad(self).eigen();
  });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  Tensor2 y(1, 1, pairwise_sum(a.value().data()));
  const std::size_t ai = a.id();
  return t.push(std::move(y), needs(t, a), [ai](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0);
    for (double& v : tp.grad_buffer(ai).data()) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Tape& t = *a.tape();
  Tensor2 y(a.rows(), 1);
  y.eigen() = a.value().eigen().rowwise().sum();
  const std::size_t ai = a.id();
  return t.push(std::move(y), needs(t, a), [ai](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).eigen();
    tp.grad_buffer(ai).eigen().colwise() += g.col(0);
  });
}

Var col_mean(Var a) {
  Tape& t = *a.tape();
  if (a.rows() == 0) throw DimensionError("col_mean of empty tensor");
  const double inv = 1.0 / static_cast<double>(a.rows());
  Tensor2 y(1, a.cols());
  y.eigen() = a.value().eigen().colwise().sum() * inv;
  const std::size_t ai = a.id();
  return t.push(std::move(y), needs(t, a), [ai, inv](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).eigen();
    tp.grad_buffer(ai).eigen().rowwise() += g.row(0) * inv;
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row counts differ");
  const std::size_t ca = a.cols(), cb = b.cols();
  Tensor2 y(a.rows(), ca + cb);
  y.eigen().leftCols(static_cast<Eigen::Index>(ca)) = a.value().eigen();
  y.eigen().rightCols(static_cast<Eigen::Index>(cb)) = b.value().eigen();
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(y), needs(t, a) || needs(t, b), [ai, bi, ca, cb](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).eigen();
    if (tp.requires_grad(ai)) tp.grad_buffer(ai).eigen() += g.leftCols(static_cast<Eigen::Index>(ca));
    if (tp.requires_grad(bi)) tp.grad_buffer(bi).eigen() += g.rightCols(static_cast<Eigen::Index>(cb));
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = *a.tape();
  if (begin + count > a.cols()) throw DimensionError("slice_cols out of range");
  Tensor2 y(a.rows(), count);
  y.eigen() = a.value().eigen().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  const std::size_t ai = a.id();
  return t.push(std::move(y), needs(t, a), [ai, begin, count](Tape& tp, std::size_t self) {
    tp.grad_buffer(ai).eigen().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        tp.grad(self).eigen();
  });
}

}  // namespace bfvae::nn
