#include "trussmat/autodiff.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <utility>

#include "trussmat/cholesky.hpp"
#include "trussmat/errors.hpp"

namespace trussmat::ad {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream s;
  s << "(" << m.rows() << "x" << m.cols() << ")";
  return s.str();
}

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a,
                                 const Matrix& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a) +
                   " vs " + shape_of(b));
}

Tape& common_tape(const char* op, const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) {
    throw ContractError(std::string(op) + ": operand is not on a tape");
  }
  if (&a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return a.tape();
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

// Output shape for an elementwise binary op with 1x1 broadcasting.
std::pair<Eigen::Index, Eigen::Index> broadcast_shape(const char* op,
                                                      const Matrix& a,
                                                      const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return {a.rows(), a.cols()};
  if (is_scalar(a)) return {b.rows(), b.cols()};
  if (is_scalar(b)) return {a.rows(), a.cols()};
  shape_mismatch(op, a, b);
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return Matrix::Constant(rows, cols, m(0, 0));
}

// Folds a broadcast gradient back onto the operand's shape.
Matrix reduce_to(const Matrix& g, const Matrix& like) {
  if (g.rows() == like.rows() && g.cols() == like.cols()) return g;
  return Matrix::Constant(1, 1, g.sum());
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

Tape& Var::tape() const {
  if (tape_ == nullptr) throw ContractError("Var is not attached to a tape");
  return *tape_;
}

const Matrix& Var::value() const { return tape().value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (!is_scalar(v)) {
    throw ShapeError("scalar(): expected (1x1), got " + shape_of(v));
  }
  return v(0, 0);
}

bool Var::requires_grad() const { return tape().requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(double value) { return variable(Matrix::Constant(1, 1, value)); }
Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::record(Matrix value, std::initializer_list<Var> inputs,
                 Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError("record: input is on another tape");
    n.inputs.push_back(in.id_);
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.adjoint.size() == 0) {
    n.adjoint = g;
  } else {
    n.adjoint += g;
  }
}

void Tape::backward(const Var& root) {
  if (root.tape_ != this) throw ContractError("backward: root is on another tape");
  if (!is_scalar(nodes_[root.id_].value)) {
    throw ContractError("backward: root must be 1x1, got " +
                        shape_of(nodes_[root.id_].value));
  }
  for (Node& n : nodes_) n.adjoint.resize(0, 0);
  nodes_[root.id_].adjoint = Matrix::Ones(1, 1);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.adjoint.size() == 0 || !n.backward) continue;
    n.backward(*this, i);
  }
}

Matrix Tape::grad(const Var& v) const {
  if (v.tape_ != this) throw ContractError("grad: variable is on another tape");
  const Node& n = nodes_[v.id_];
  if (n.adjoint.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

// ---------------------------------------------------------------------------
// Activations

Var activation(const Var& x, Activation act) {
  Tape& t = x.tape();
  const Matrix& v = x.value();
  const std::size_t xi = x.id();
  Matrix out(v.rows(), v.cols());

  switch (act.kind) {
    case ActivationKind::kRelu:
      out = v.cwiseMax(0.0);
      return t.record(std::move(out), {x}, [xi](Tape& tp, std::size_t self) {
        const Matrix& xv = tp.value(xi);
        tp.accumulate(xi, (xv.array() > 0.0)
                              .select(tp.adjoint(self).array(), 0.0)
                              .matrix());
      });
    case ActivationKind::kSigmoid:
      out = (1.0 / (1.0 + (-v.array()).exp())).matrix();
      return t.record(std::move(out), {x}, [xi](Tape& tp, std::size_t self) {
        const Matrix& s = tp.value(self);
        tp.accumulate(xi, (tp.adjoint(self).array() * s.array() *
                           (1.0 - s.array()))
                              .matrix());
      });
    case ActivationKind::kLog:
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!(v(i) > 0.0)) {
          std::ostringstream msg;
          msg << "log: non-positive input " << v(i) << " at index " << i;
          throw DomainError(msg.str(), i);
        }
      }
      out = v.array().log().matrix();
      return t.record(std::move(out), {x}, [xi](Tape& tp, std::size_t self) {
        tp.accumulate(xi, (tp.adjoint(self).array() / tp.value(xi).array())
                              .matrix());
      });
    case ActivationKind::kExp:
      out = v.array().exp().matrix();
      return t.record(std::move(out), {x}, [xi](Tape& tp, std::size_t self) {
        tp.accumulate(xi, (tp.adjoint(self).array() * tp.value(self).array())
                              .matrix());
      });
    case ActivationKind::kPower: {
      const double p = act.exponent;
      const bool integral = std::floor(p) == p;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!integral && v(i) < 0.0) {
          std::ostringstream msg;
          msg << "pow: negative input " << v(i) << " at index " << i
              << " with non-integer exponent " << p;
          throw DomainError(msg.str(), i);
        }
      }
      out = v.array().pow(p).matrix();
      return t.record(std::move(out), {x}, [xi, p](Tape& tp, std::size_t self) {
        const Matrix& xv = tp.value(xi);
        tp.accumulate(xi, (tp.adjoint(self).array() * p *
                           xv.array().pow(p - 1.0))
                              .matrix());
      });
    }
  }
  throw ContractError("activation: unknown kind");
}

Var relu(const Var& x) { return activation(x, {ActivationKind::kRelu}); }
Var sigmoid(const Var& x) { return activation(x, {ActivationKind::kSigmoid}); }
Var log(const Var& x) { return activation(x, {ActivationKind::kLog}); }
Var exp(const Var& x) { return activation(x, {ActivationKind::kExp}); }
Var pow(const Var& x, double exponent) {
  return activation(x, {ActivationKind::kPower, exponent});
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(const Var& a, const Var& b) {
  Tape& t = common_tape("matmul", a, b);
  if (a.cols() != b.rows()) shape_mismatch("matmul", a.value(), b.value());
  const std::size_t ai = a.id();
  const std::size_t bi = b.id();
  return t.record(a.value() * b.value(), {a, b},
                  [ai, bi](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.adjoint(self);
                    if (tp.requires_grad(ai)) {
                      tp.accumulate(ai, g * tp.value(bi).transpose());
                    }
                    if (tp.requires_grad(bi)) {
                      tp.accumulate(bi, tp.value(ai).transpose() * g);
                    }
                  });
}

Var transpose(const Var& a) {
  const std::size_t ai = a.id();
  return a.tape().record(a.value().transpose(), {a},
                         [ai](Tape& tp, std::size_t self) {
                           tp.accumulate(ai, tp.adjoint(self).transpose());
                         });
}

Var add_row(const Var& x, const Var& row) {
  Tape& t = common_tape("add_row", x, row);
  if (row.rows() != 1 || row.cols() != x.cols()) {
    shape_mismatch("add_row", x.value(), row.value());
  }
  const std::size_t xi = x.id();
  const std::size_t ri = row.id();
  Matrix out = x.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), {x, row},
                  [xi, ri](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.adjoint(self);
                    tp.accumulate(xi, g);
                    if (tp.requires_grad(ri)) tp.accumulate(ri, g.colwise().sum());
                  });
}

Var weighted_gram(const Matrix& d, const Var& c) {
  if (c.cols() != 1 || c.rows() != d.rows()) {
    shape_mismatch("weighted_gram", d, c.value());
  }
  const std::size_t ci = c.id();
  Matrix out = d.transpose() * c.value().col(0).asDiagonal() * d;
  return c.tape().record(std::move(out), {c},
                         [ci, d](Tape& tp, std::size_t self) {
                           const Matrix& g = tp.adjoint(self);
                           // d/dc_k of d_kᵀ diag(c) d_k contracted with g.
                           Matrix gc = (d * g).cwiseProduct(d).rowwise().sum();
                           tp.accumulate(ci, gc);
                         });
}

Var linear_solve(const Var& k, const Var& f) {
  Tape& t = common_tape("linear_solve", k, f);
  if (k.rows() != k.cols() || f.rows() != k.rows()) {
    shape_mismatch("linear_solve", k.value(), f.value());
  }
  auto factor = std::make_shared<Cholesky>(k.value());
  Matrix u = factor->solve(f.value());
  const std::size_t ki = k.id();
  const std::size_t fi = f.id();
  return t.record(std::move(u), {k, f},
                  [ki, fi, factor](Tape& tp, std::size_t self) {
                    const Matrix lambda = factor->solve(tp.adjoint(self));
                    tp.accumulate(fi, lambda);
                    if (tp.requires_grad(ki)) {
                      const Matrix& u = tp.value(self);
                      Matrix gk = lambda * u.transpose();
                      tp.accumulate(ki, -0.5 * (gk + gk.transpose()));
                    }
                  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

Var operator+(const Var& a, const Var& b) {
  Tape& t = common_tape("add", a, b);
  auto [r, c] = broadcast_shape("add", a.value(), b.value());
  Matrix out = expand(a.value(), r, c) + expand(b.value(), r, c);
  const std::size_t ai = a.id();
  const std::size_t bi = b.id();
  return t.record(std::move(out), {a, b}, [ai, bi](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    tp.accumulate(ai, reduce_to(g, tp.value(ai)));
    tp.accumulate(bi, reduce_to(g, tp.value(bi)));
  });
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = common_tape("sub", a, b);
  auto [r, c] = broadcast_shape("sub", a.value(), b.value());
  Matrix out = expand(a.value(), r, c) - expand(b.value(), r, c);
  const std::size_t ai = a.id();
  const std::size_t bi = b.id();
  return t.record(std::move(out), {a, b}, [ai, bi](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    tp.accumulate(ai, reduce_to(g, tp.value(ai)));
    tp.accumulate(bi, reduce_to(-g, tp.value(bi)));
  });
}

Var operator-(const Var& a) {
  const std::size_t ai = a.id();
  return a.tape().record(-a.value(), {a}, [ai](Tape& tp, std::size_t self) {
    tp.accumulate(ai, -tp.adjoint(self));
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = common_tape("mul", a, b);
  auto [r, c] = broadcast_shape("mul", a.value(), b.value());
  Matrix out =
      expand(a.value(), r, c).cwiseProduct(expand(b.value(), r, c));
  const std::size_t ai = a.id();
  const std::size_t bi = b.id();
  return t.record(std::move(out), {a, b},
                  [ai, bi, r, c](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.adjoint(self);
                    const Matrix& av = tp.value(ai);
                    const Matrix& bv = tp.value(bi);
                    if (tp.requires_grad(ai)) {
                      tp.accumulate(ai,
                                    reduce_to(g.cwiseProduct(expand(bv, r, c)), av));
                    }
                    if (tp.requires_grad(bi)) {
                      tp.accumulate(bi,
                                    reduce_to(g.cwiseProduct(expand(av, r, c)), bv));
                    }
                  });
}

Var div(const Var& a, const Var& b) {
  Tape& t = common_tape("div", a, b);
  auto [r, c] = broadcast_shape("div", a.value(), b.value());
  Matrix out = expand(a.value(), r, c).cwiseQuotient(expand(b.value(), r, c));
  const std::size_t ai = a.id();
  const std::size_t bi = b.id();
  return t.record(std::move(out), {a, b},
                  [ai, bi, r, c](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.adjoint(self);
                    const Matrix bx = expand(tp.value(bi), r, c);
                    if (tp.requires_grad(ai)) {
                      tp.accumulate(ai, reduce_to(g.cwiseQuotient(bx), tp.value(ai)));
                    }
                    if (tp.requires_grad(bi)) {
                      // d(a/b)/db = -out / b
                      Matrix gb = -g.cwiseProduct(tp.value(self)).cwiseQuotient(bx);
                      tp.accumulate(bi, reduce_to(gb, tp.value(bi)));
                    }
                  });
}

Var operator*(double s, const Var& a) {
  const std::size_t ai = a.id();
  return a.tape().record(s * a.value(), {a}, [ai, s](Tape& tp, std::size_t self) {
    tp.accumulate(ai, s * tp.adjoint(self));
  });
}

Var operator*(const Var& a, double s) { return s * a; }

Var operator+(const Var& a, double s) {
  const std::size_t ai = a.id();
  Matrix out = a.value().array() + s;
  return a.tape().record(std::move(out), {a}, [ai](Tape& tp, std::size_t self) {
    tp.accumulate(ai, tp.adjoint(self));
  });
}

Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) { return (-a) + s; }

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& x) {
  const std::size_t xi = x.id();
  const Eigen::Index r = x.rows();
  const Eigen::Index c = x.cols();
  return x.tape().record(Matrix::Constant(1, 1, x.value().sum()), {x},
                         [xi, r, c](Tape& tp, std::size_t self) {
                           tp.accumulate(xi, Matrix::Constant(r, c, tp.adjoint(self)(0, 0)));
                         });
}

Var mean(const Var& x) {
  if (x.size() == 0) throw ShapeError("mean: empty input");
  return (1.0 / static_cast<double>(x.size())) * sum(x);
}

Var dot(const Var& a, const Var& b) {
  Tape& t = common_tape("dot", a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_mismatch("dot", a.value(), b.value());
  }
  const std::size_t ai = a.id();
  const std::size_t bi = b.id();
  const double v = a.value().cwiseProduct(b.value()).sum();
  return t.record(Matrix::Constant(1, 1, v), {a, b},
                  [ai, bi](Tape& tp, std::size_t self) {
                    const double g = tp.adjoint(self)(0, 0);
                    if (tp.requires_grad(ai)) tp.accumulate(ai, g * tp.value(bi));
                    if (tp.requires_grad(bi)) tp.accumulate(bi, g * tp.value(ai));
                  });
}

Var element(const Var& x, Eigen::Index row, Eigen::Index col) {
  if (row < 0 || col < 0 || row >= x.rows() || col >= x.cols()) {
    std::ostringstream msg;
    msg << "element: index (" << row << "," << col << ") out of range for "
        << shape_of(x.value());
    throw ShapeError(msg.str());
  }
  const std::size_t xi = x.id();
  const Eigen::Index r = x.rows();
  const Eigen::Index c = x.cols();
  return x.tape().record(Matrix::Constant(1, 1, x.value()(row, col)), {x},
                         [xi, r, c, row, col](Tape& tp, std::size_t self) {
                           Matrix g = Matrix::Zero(r, c);
                           g(row, col) = tp.adjoint(self)(0, 0);
                           tp.accumulate(xi, g);
                         });
}

Var element(const Var& x, Eigen::Index index) {
  if (x.cols() == 1) return element(x, index, 0);
  if (x.rows() == 1) return element(x, 0, index);
  throw ShapeError("element: linear index on non-vector " + shape_of(x.value()));
}

double pnorm_value(const Eigen::Ref<const Eigen::VectorXd>& x, int p) {
  if (p <= 0 || p % 2 != 0) {
    throw ContractError("pnorm: exponent must be a positive even integer");
  }
  const double top = x.size() == 0 ? 0.0 : x.maxCoeff();
  if (!(top > 0.0)) return 0.0;
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) > 0.0) s += std::pow(x(i) / top, p);
  }
  return top * std::pow(s, 1.0 / p);
}

Var pnorm(const Var& x, int p) {
  if (x.size() == 0) throw ShapeError("pnorm: empty input");
  const Eigen::Map<const Eigen::VectorXd> flat(x.value().data(), x.size());
  const double y = pnorm_value(flat, p);
  const std::size_t xi = x.id();
  return x.tape().record(Matrix::Constant(1, 1, y), {x},
                         [xi, p, y](Tape& tp, std::size_t self) {
                           if (y == 0.0) return;  // subgradient 0 at the origin
                           const Matrix& xv = tp.value(xi);
                           const double g = tp.adjoint(self)(0, 0);
                           Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
                           for (Eigen::Index i = 0; i < xv.size(); ++i) {
                             if (xv(i) > 0.0) gx(i) = g * std::pow(xv(i) / y, p - 1);
                           }
                           tp.accumulate(xi, gx);
                         });
}

}  // namespace trussmat::ad
