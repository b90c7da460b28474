#ifndef TRUSSMAT_AUTODIFF_HPP
#define TRUSSMAT_AUTODIFF_HPP

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records primitive operations in execution order (define-by-run).
// Every value is a matrix; scalars are 1x1 and column vectors are n x 1.
// Calling Tape::backward(root) on a 1x1 root fills the adjoint of every node
// that root depends on. The tape is meant to be rebuilt for each evaluation.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include <Eigen/Dense>

namespace trussmat::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its Tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }
  /// Value of a 1x1 node; throws ShapeError otherwise.
  double scalar() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Propagates the adjoint of node `self` into its inputs.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Matrix value);
  /// Leaf that does not.
  Var constant(Matrix value);
  Var variable(double value);
  Var constant(double value);

  /// Appends a node computed from `inputs`. The backward callback is only
  /// kept when at least one input requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs,
             Backward backward);

  /// Reverse sweep from a 1x1 root. Clears adjoints from any earlier sweep.
  void backward(const Var& root);

  /// Adjoint of `v` from the last backward sweep; zeros if `v` was not reached.
  Matrix grad(const Var& v) const;

  /// Adds `g` into the adjoint of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Matrix& g);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& adjoint(std::size_t id) const { return nodes_[id].adjoint; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_[id].inputs;
  }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

// Elementwise activations.
enum class ActivationKind { kRelu, kSigmoid, kLog, kExp, kPower };

struct Activation {
  ActivationKind kind;
  double exponent = 1.0;  // only used by kPower
};

Var activation(const Var& x, Activation act);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var log(const Var& x);
Var exp(const Var& x);
Var pow(const Var& x, double exponent);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Adds a 1 x n row to every row of an m x n matrix (dense-layer bias).
Var add_row(const Var& x, const Var& row);
/// Dᵀ diag(c) D for a constant matrix D (m x n) and an m x 1 weight vector c.
Var weighted_gram(const Matrix& d, const Var& c);
/// u = K⁻¹ f for symmetric positive definite K. The backward pass reuses the
/// factorization for the adjoint solve.
Var linear_solve(const Var& k, const Var& f);

// Elementwise arithmetic. Operands must match in shape, or one may be 1x1.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);

// Reductions.
Var sum(const Var& x);
Var mean(const Var& x);
Var dot(const Var& a, const Var& b);
Var element(const Var& x, Eigen::Index row, Eigen::Index col);
Var element(const Var& x, Eigen::Index index);

/// Smooth upper bound of max over the positive parts of x:
/// (Σ max(0, xᵢ)^p)^(1/p). Returns 0, with zero gradient, when no entry is
/// positive. p must be a positive even integer.
Var pnorm(const Var& x, int p);

/// Plain-value version of pnorm, for reporting and tests.
double pnorm_value(const Eigen::Ref<const Eigen::VectorXd>& x, int p);

}  // namespace trussmat::ad

#endif  // TRUSSMAT_AUTODIFF_HPP
