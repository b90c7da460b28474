#ifndef TRUSSMAT_CHOLESKY_HPP
#define TRUSSMAT_CHOLESKY_HPP

#include <Eigen/Dense>

namespace trussmat {

/// Dense Cholesky factorization K = L Lᵀ of a symmetric positive definite
/// matrix. Unlike Eigen::LLT it reports which pivot failed, which is what a
/// caller needs to locate an unrestrained DOF.
class Cholesky {
 public:
  /// Pivots at or below `relative_tolerance * max|diag(K)|` count as singular.
  explicit Cholesky(const Eigen::MatrixXd& matrix,
                    double relative_tolerance = 1e-13);

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

  const Eigen::MatrixXd& lower() const { return lower_; }
  Eigen::Index size() const { return lower_.rows(); }

 private:
  Eigen::MatrixXd lower_;
};

}  // namespace trussmat

#endif  // TRUSSMAT_CHOLESKY_HPP
