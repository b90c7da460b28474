#include "trussmat/cholesky.hpp"

#include <cmath>
#include <sstream>

#include "trussmat/errors.hpp"

namespace trussmat {

Cholesky::Cholesky(const Eigen::MatrixXd& matrix, double relative_tolerance) {
  if (matrix.rows() != matrix.cols()) {
    std::ostringstream msg;
    msg << "cholesky: matrix is not square (" << matrix.rows() << "x"
        << matrix.cols() << ")";
    throw ShapeError(msg.str());
  }
  const Eigen::Index n = matrix.rows();
  lower_ = Eigen::MatrixXd::Zero(n, n);
  if (n == 0) return;

  const double scale = matrix.diagonal().cwiseAbs().maxCoeff();
  const double floor = relative_tolerance * scale;

  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = matrix(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= lower_(j, k) * lower_(j, k);
    if (!std::isfinite(pivot) || pivot <= floor) {
      std::ostringstream msg;
      msg << "matrix is singular or not positive definite: pivot " << j
          << " = " << pivot;
      throw SingularMatrixError(msg.str(), j);
    }
    const double diag = std::sqrt(pivot);
    lower_(j, j) = diag;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = matrix(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= lower_(i, k) * lower_(j, k);
      lower_(i, j) = s / diag;
    }
  }
}

Eigen::VectorXd Cholesky::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != size()) {
    std::ostringstream msg;
    msg << "cholesky solve: rhs size " << rhs.size() << " vs matrix size "
        << size();
    throw ShapeError(msg.str());
  }
  Eigen::VectorXd y = lower_.triangularView<Eigen::Lower>().solve(rhs);
  return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::MatrixXd Cholesky::solve(const Eigen::MatrixXd& rhs) const {
  if (rhs.rows() != size()) {
    std::ostringstream msg;
    msg << "cholesky solve: rhs rows " << rhs.rows() << " vs matrix size "
        << size();
    throw ShapeError(msg.str());
  }
  Eigen::MatrixXd y = lower_.triangularView<Eigen::Lower>().solve(rhs);
  return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
}

}  // namespace trussmat
