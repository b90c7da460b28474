#ifndef TRUSSMAT_TRUSS_HPP
#define TRUSSMAT_TRUSS_HPP

// Linear-elastic pin-jointed planar truss.
//
// Global DOF 2*n is the x displacement of node n and 2*n+1 the y
// displacement. Fixed DOFs are eliminated before assembly, so every matrix
// and vector below lives in the reduced (free-DOF) space unless noted.

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trussmat/autodiff.hpp"
#include "trussmat/cholesky.hpp"

namespace trussmat {

struct Member {
  int i = 0;
  int j = 0;
};

class Truss {
 public:
  /// `loads` holds one entry per global DOF. Throws GeometryError on
  /// out-of-range indices, zero-length or duplicate members, fewer than three
  /// fixed DOFs, or a load vector of the wrong size.
  Truss(std::vector<Eigen::Vector2d> nodes, std::vector<Member> members,
        std::vector<int> fixed_dofs, Eigen::VectorXd loads);

  const std::vector<Eigen::Vector2d>& nodes() const { return nodes_; }
  const std::vector<Member>& members() const { return members_; }
  const std::vector<int>& fixed_dofs() const { return fixed_; }
  const std::vector<int>& free_dofs() const { return free_; }
  const Eigen::VectorXd& loads() const { return loads_; }

  Eigen::Index node_count() const { return static_cast<Eigen::Index>(nodes_.size()); }
  Eigen::Index member_count() const { return static_cast<Eigen::Index>(members_.size()); }
  Eigen::Index dof_count() const { return static_cast<Eigen::Index>(free_.size()); }

  const Eigen::VectorXd& lengths() const { return lengths_; }
  /// Reduced load vector f.
  const Eigen::VectorXd& reduced_loads() const { return reduced_loads_; }
  /// Compatibility matrix B (members x free DOFs): elongation = B u.
  const Eigen::MatrixXd& compatibility() const { return compat_; }

  /// Expands a reduced displacement vector to all global DOFs.
  Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const;

  /// Rigidly rotates nodes and loads about the origin.
  Truss rotated(double angle) const;

 private:
  std::vector<Eigen::Vector2d> nodes_;
  std::vector<Member> members_;
  std::vector<int> fixed_;
  std::vector<int> free_;
  Eigen::VectorXd loads_;
  Eigen::VectorXd lengths_;
  Eigen::VectorXd reduced_loads_;
  Eigen::MatrixXd compat_;
};

// ---------------------------------------------------------------------------
// Plain-value analysis, templated on the scalar type.

/// K = Bᵀ diag(E A / L) B.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> stiffness_matrix(
    const Truss& truss, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& areas,
    Scalar modulus) {
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> b =
      truss.compatibility().template cast<Scalar>();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> axial =
      modulus * areas.cwiseQuotient(truss.lengths().template cast<Scalar>());
  return b.transpose() * axial.asDiagonal() * b;
}

/// Tension-positive member forces for reduced displacements u.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> member_forces(
    const Truss& truss, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& areas, Scalar modulus) {
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> elongation =
      truss.compatibility().template cast<Scalar>() * u;
  return (modulus * areas.cwiseQuotient(truss.lengths().template cast<Scalar>()))
      .cwiseProduct(elongation);
}

struct Analysis {
  Eigen::VectorXd displacements;  // reduced
  Eigen::VectorXd forces;         // per member, tension positive
  double compliance = 0.0;        // fᵀu
};

/// Assemble, factor and solve. Throws SingularMatrixError for an
/// under-restrained structure.
Analysis analyze(const Truss& truss, const Eigen::VectorXd& areas, double modulus);

// ---------------------------------------------------------------------------
// Tape versions: differentiable in areas (N x 1) and modulus (1 x 1).

ad::Var assemble_stiffness(const Truss& truss, const ad::Var& areas,
                           const ad::Var& modulus);
ad::Var solve_displacements(const ad::Var& stiffness, const ad::Var& loads);
ad::Var member_forces(const Truss& truss, const ad::Var& u, const ad::Var& areas,
                      const ad::Var& modulus);
ad::Var compliance(const ad::Var& loads, const ad::Var& u);

// ---------------------------------------------------------------------------
// Files and bundled examples.
//
// Truss files are sectioned text:
//   [nodes]    id x y
//   [members]  id i j        (i, j are node ids)
//   [supports] node dof      (dof is x or y)
//   [loads]    node Fx Fy
// Blank lines and lines starting with '#' are ignored.

Truss parse_truss(std::istream& in, const std::string& source);
Truss load_truss(const std::string& path);
void write_truss(std::ostream& out, const Truss& truss);

/// Six-bar mid-height-loaded cantilever: two 1 m bays, 0.8 m deep, left edge
/// pinned, 1e4 N downward at the tip.
Truss midcant6();

struct TowerParams {
  int panels = 9;            // 5 bars per panel + 2 apex bars
  double base_width = 3.0;   // m
  double top_width = 1.0;    // m
  double panel_height = 1.5; // m
  double mast_height = 1.5;  // apex above the top panel, m
  double lateral_load = 5e3; // N at the apex, +x
  double vertical_load = -1e4;  // N at the apex
};

/// Tapered planar antenna tower; the defaults give 47 members.
Truss tower(const TowerParams& params = {});

/// `midcant6` and `tower47` name bundled geometries; anything else is a path.
Truss resolve_truss(const std::string& name_or_path);

}  // namespace trussmat

#endif  // TRUSSMAT_TRUSS_HPP
