#ifndef TRUSSMAT_OPTIMIZER_HPP
#define TRUSSMAT_OPTIMIZER_HPP

// Simultaneous truss sizing and material selection.
//
// Two small design networks reparameterize the design: one produces the
// member areas, the other a point z in the latent space of a trained VAE
// whose decoder turns z into material properties. The constrained problem
//
//   minimize    J = fᵀu
//   subject to  budget (cost or mass), Euler buckling, tensile yield
//
// is turned into an unconstrained loss with a log-barrier whose sharpness t
// grows geometrically, and the network weights are trained with Adagrad.
// Afterwards the latent optimum is snapped to the nearest database material
// and the areas are re-optimized with that material's true properties.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trussmat/autodiff.hpp"
#include "trussmat/materials.hpp"
#include "trussmat/nn.hpp"
#include "trussmat/truss.hpp"
#include "trussmat/vae.hpp"

namespace trussmat {

// ---------------------------------------------------------------------------
// Design networks

/// Feed-forward net with a constant scalar input of 1, relu hidden layers and
/// a sigmoid output layer.
struct DesignNet {
  std::vector<nn::Dense> layers;

  static DesignNet glorot(Eigen::Index outputs, Eigen::Index hidden,
                          std::mt19937_64& rng);
  /// Sigmoid outputs as a 1 x outputs row, in (0, 1).
  Eigen::RowVectorXd outputs() const;
  /// Same, recorded on a tape.
  ad::Var outputs(ad::Tape& tape, bool trainable,
                  std::vector<ad::Var>* params = nullptr) const;
  std::vector<nn::Matrix*> parameters();
};

struct DesignNets {
  DesignNet areas;     // N outputs
  DesignNet material;  // 2 outputs

  static DesignNets init(Eigen::Index members, Eigen::Index hidden,
                         std::uint64_t seed);
};

/// A = A_min + O_T (A_max − A_min), as an N x 1 column.
Eigen::VectorXd forward_areas(const DesignNet& net, double area_min, double area_max);
ad::Var forward_areas(ad::Tape& tape, const DesignNet& net, double area_min,
                      double area_max, bool trainable,
                      std::vector<ad::Var>* params = nullptr);

/// z = −3 + 6 O_M.
Latent forward_latent(const DesignNet& net);
ad::Var forward_latent(ad::Tape& tape, const DesignNet& net, bool trainable,
                       std::vector<ad::Var>* params = nullptr);

// ---------------------------------------------------------------------------
// Constraints and barrier (tape versions take 1x1 property nodes)

/// ρ Ĉ / C* Σ A_k L_k − 1.
ad::Var cost_constraint(const ad::Var& areas, const Eigen::VectorXd& lengths,
                        const ad::Var& density, const ad::Var& cost,
                        double cost_limit);
/// ρ / M* Σ A_k L_k − 1.
ad::Var mass_constraint(const ad::Var& areas, const Eigen::VectorXd& lengths,
                        const ad::Var& density, double mass_limit);
/// Positive-part p-norm of −4 P_k L_k² / (π² E A_k²), minus 1/F_s.
ad::Var buckling_constraint(const ad::Var& forces, const Eigen::VectorXd& lengths,
                            const ad::Var& areas, const ad::Var& modulus,
                            double safety_factor, int p);
/// Positive-part p-norm of P_k / (Y A_k), minus 1/F_s.
ad::Var yield_constraint(const ad::Var& forces, const ad::Var& areas,
                         const ad::Var& yield, double safety_factor, int p);

/// Per-member buckling utilisation −4 P L² / (π² E A²).
Eigen::VectorXd buckling_ratios(const Eigen::VectorXd& forces,
                                const Eigen::VectorXd& lengths,
                                const Eigen::VectorXd& areas, double modulus);

/// ψ_t(g): −(1/t) ln(−g) for g ≤ −1/t², else t g − (1/t) ln(1/t²) + 1/t.
ad::Var barrier(const ad::Var& g, double t);
double barrier_value(double g, double t);

// ---------------------------------------------------------------------------
// Problem definition

struct ProblemSpec {
  Truss truss;
  std::shared_ptr<const VaeModel> decoder;  // may be null for area-only runs

  std::optional<double> cost_limit;  // C*, $
  std::optional<double> mass_limit;  // M*, kg
  double safety_factor = 4.0;
  double area_min = 1e-9;  // m²
  double area_max = 1e-2;  // m²
  int p = 6;
  double t0 = 3.0;
  double mu = 1.01;
  double lr = 2e-3;
  int max_iters = 2000;
  double eps_star = 1e-6;  // stop when the Adagrad step norm drops below this
  double feasibility_tol = 1e-3;
  int hidden = 20;         // design-network width

  explicit ProblemSpec(Truss t) : truss(std::move(t)) {}
  /// Throws ContractError on invalid settings.
  void validate() const;
};

/// Selects which design variables move.
struct DesignMode {
  std::optional<Eigen::VectorXd> fixed_areas;  // material-only run
  std::optional<Material> fixed_material;      // area-only run, true properties
};

/// Constraint values; g_cost / g_mass are NaN when that budget is inactive.
struct ConstraintValues {
  double cost = std::numeric_limits<double>::quiet_NaN();
  double mass = std::numeric_limits<double>::quiet_NaN();
  double buckling = 0.0;
  double yield = 0.0;

  double worst() const;
  bool satisfied(double tol) const { return worst() <= tol; }
};

/// Plain evaluation of a design with given properties, using true maxima.
struct DesignEvaluation {
  double compliance = 0.0;
  Eigen::VectorXd forces;
  ConstraintValues constraints;
};
DesignEvaluation evaluate_design(const ProblemSpec& spec, const Eigen::VectorXd& areas,
                                 const Properties& props);

/// Tape evaluation of the barrier loss for given area and property nodes.
struct TapeEvaluation {
  ad::Var areas;  // N x 1
  ad::Var z;      // 1 x 2, invalid when the material is fixed
  ad::Var props;  // 1 x 4
  ad::Var compliance;
  ad::Var forces;
  ad::Var g_cost;  // invalid when the budget is inactive
  ad::Var g_mass;
  ad::Var g_buckling;
  ad::Var g_yield;
  ad::Var loss;
};
TapeEvaluation evaluate_loss(const ProblemSpec& spec, const ad::Var& areas,
                             const ad::Var& props, double t);

/// Full barrier loss as a function of the design-network weights, recorded
/// on `tape`. Parameters of the moving networks are appended to `params`
/// in the order of DesignNets parameters (areas then material).
TapeEvaluation record_design_loss(ad::Tape& tape, const ProblemSpec& spec,
                                  const DesignMode& mode, const DesignNets& nets,
                                  double t, std::vector<ad::Var>* params);

// ---------------------------------------------------------------------------
// Optimization

struct IterationRecord {
  int iteration = 0;
  double t = 0.0;
  double compliance = 0.0;
  ConstraintValues constraints;  // true maxima
  double g_buckling_relaxed = 0.0;
  double g_yield_relaxed = 0.0;
  Latent z = Latent::Zero();
  double loss = 0.0;
  double step_norm = 0.0;
};

struct RankedMaterial {
  int index = 0;       // row in the database
  std::string name;
  std::string cls;
  double distance = 0.0;
  double confidence = 0.0;  // γ in [0, 1]
};

struct OptimizationReport {
  std::string mode;  // "simultaneous", "material-only" or "area-only"
  std::vector<IterationRecord> history;
  DesignNets nets;
  bool converged = false;
  int iterations = 0;

  // Continuous optimum.
  Latent z_star = Latent::Zero();
  Properties properties = Properties::Zero();  // decoded at z* or fixed
  Eigen::VectorXd areas;
  double j_raw = 0.0;
  ConstraintValues raw_constraints;
  bool raw_feasible = false;

  // After snapping to a database material.
  std::vector<RankedMaterial> ranking;
  std::optional<Material> snapped;
  Eigen::VectorXd a_star;
  double j_star = std::numeric_limits<double>::quiet_NaN();
  ConstraintValues final_constraints;
  bool snapped_feasible = false;
  std::vector<IterationRecord> reopt_history;

  /// Feasibility of the final design (snapped when available).
  bool feasible() const { return snapped ? snapped_feasible : raw_feasible; }
};

/// Runs the barrier/Adagrad loop. `warm_start` replaces the seeded network
/// initialization. Throws AnalysisError (singular stiffness, with the
/// iteration) or DivergenceError (non-finite loss).
OptimizationReport run(const ProblemSpec& spec, std::uint64_t seed,
                       const DesignMode& mode = {},
                       const DesignNets* warm_start = nullptr);

/// γ_m = 1 − ‖z* − z_m‖ / max_k ‖z* − z_k‖ for every embedding row, sorted by
/// descending γ with ties kept in row order.
std::vector<RankedMaterial> confidence_ranking(const Latent& z_star,
                                               const Eigen::MatrixX2d& embeddings);
std::vector<RankedMaterial> confidence_ranking(const Latent& z_star,
                                               const VaeModel& model,
                                               const MaterialDatabase& db);

/// Ranks materials around report.z_star, fixes the top one with its database
/// properties and re-optimizes the areas (warm-started, barrier restarted at
/// t0). Fills ranking, snapped, a_star, j_star and final_constraints.
void snap_and_reoptimize(const ProblemSpec& spec, const MaterialDatabase& db,
                         OptimizationReport& report, std::uint64_t seed);

/// run() followed by snap_and_reoptimize().
OptimizationReport optimize(const ProblemSpec& spec, const MaterialDatabase& db,
                            std::uint64_t seed);

struct MaterialCandidate {
  std::string name;
  std::string cls;
  double compliance = 0.0;
  ConstraintValues constraints;
  bool feasible = false;
};

struct BruteForceResult {
  std::vector<MaterialCandidate> candidates;  // database order
  int best = -1;
};

/// Evaluates every material at fixed areas and picks the feasible one with
/// the lowest compliance. Throws InfeasibleError listing the violations when
/// none is feasible.
BruteForceResult brute_force_material_search(const ProblemSpec& spec,
                                             const MaterialDatabase& db,
                                             const Eigen::VectorXd& areas);

// ---------------------------------------------------------------------------
// Output

nlohmann::json report_to_json(const OptimizationReport& report);
/// Iteration, t, J, constraints, z, loss: one row per iteration.
void write_history_csv(std::ostream& out, const std::vector<IterationRecord>& history);

}  // namespace trussmat

#endif  // TRUSSMAT_OPTIMIZER_HPP
