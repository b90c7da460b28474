#include "trussmat/nn.hpp"

#include <cmath>

#include "trussmat/errors.hpp"

namespace trussmat::nn {

Dense glorot_dense(Eigen::Index inputs, Eigen::Index outputs,
                   std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(inputs + outputs));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Dense layer;
  layer.weight.resize(inputs, outputs);
  for (Eigen::Index j = 0; j < outputs; ++j) {
    for (Eigen::Index i = 0; i < inputs; ++i) layer.weight(i, j) = dist(rng);
  }
  layer.bias = Matrix::Zero(1, outputs);
  return layer;
}

BoundDense bind(ad::Tape& tape, const Dense& layer, bool trainable) {
  if (trainable) return {tape.variable(layer.weight), tape.variable(layer.bias)};
  return {tape.constant(layer.weight), tape.constant(layer.bias)};
}

Matrix apply(const Dense& layer, const Matrix& x) {
  return (x * layer.weight).rowwise() + layer.bias.row(0);
}

namespace {

void check_lists(const std::vector<Matrix*>& params,
                 const std::vector<Matrix>& grads, std::vector<Matrix>& state) {
  if (params.size() != grads.size()) {
    throw ContractError("optimizer step: parameter/gradient count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw ShapeError("optimizer step: gradient shape differs from parameter " +
                       std::to_string(i));
    }
  }
  if (state.empty()) {
    for (const Matrix* p : params) state.push_back(Matrix::Zero(p->rows(), p->cols()));
  } else if (state.size() != params.size()) {
    throw ContractError("optimizer step: parameter list changed between steps");
  }
}

}  // namespace

void Adam::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
  check_lists(params, grads, m_);
  check_lists(params, grads, v_);
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
    params[i]->array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double Adagrad::step(const std::vector<Matrix*>& params,
                     const std::vector<Matrix>& grads) {
  check_lists(params, grads, sum_sq_);
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    sum_sq_[i] += grads[i].cwiseAbs2();
    const Matrix delta =
        (lr_ * grads[i].array() / (sum_sq_[i].array().sqrt() + eps_)).matrix();
    *params[i] -= delta;
    norm_sq += delta.squaredNorm();
  }
  return std::sqrt(norm_sq);
}

}  // namespace trussmat::nn
