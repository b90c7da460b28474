#ifndef TRUSSMAT_NN_HPP
#define TRUSSMAT_NN_HPP

// Small dense-network helpers shared by the VAE and the design networks.

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "trussmat/autodiff.hpp"

namespace trussmat::nn {

using Matrix = Eigen::MatrixXd;

/// Affine layer y = x W + b, with x laid out as rows of samples.
struct Dense {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out

  Eigen::Index inputs() const { return weight.rows(); }
  Eigen::Index outputs() const { return weight.cols(); }
};

/// Glorot-uniform weights, zero bias.
Dense glorot_dense(Eigen::Index inputs, Eigen::Index outputs,
                   std::mt19937_64& rng);

/// A Dense layer's parameters placed on a tape.
struct BoundDense {
  ad::Var weight;
  ad::Var bias;

  ad::Var operator()(const ad::Var& x) const {
    return ad::add_row(ad::matmul(x, weight), bias);
  }
};

/// Trainable layers become tape variables, frozen ones constants.
BoundDense bind(ad::Tape& tape, const Dense& layer, bool trainable);

/// Plain-value forward pass of one layer.
Matrix apply(const Dense& layer, const Matrix& x);

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Updates params[i] -= step(grads[i]). The parameter list must keep the
  /// same order and shapes between calls.
  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Adagrad: per-entry step lr * g / (sqrt(Σ g²) + eps).
class Adagrad {
 public:
  explicit Adagrad(double lr, double eps = 1e-10) : lr_(lr), eps_(eps) {}

  /// Applies one update and returns the Euclidean norm of the change.
  double step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);

 private:
  double lr_, eps_;
  std::vector<Matrix> sum_sq_;
};

}  // namespace trussmat::nn

#endif  // TRUSSMAT_NN_HPP
