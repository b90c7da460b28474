#ifndef TRUSSMAT_EXPERIMENTS_HPP
#define TRUSSMAT_EXPERIMENTS_HPP

// Comparison studies built on the optimizer: sequential versus simultaneous
// design, and refinement with a VAE trained on a class subset.

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trussmat/materials.hpp"
#include "trussmat/optimizer.hpp"
#include "trussmat/vae.hpp"

namespace trussmat {

struct ScenarioRow {
  std::string label;
  std::string material;
  std::string cls;
  double confidence = 1.0;  // of the chosen material; 1 when it was given
  double compliance = 0.0;
  Eigen::VectorXd areas;
  ConstraintValues constraints;
  bool feasible = false;
};

struct ScenarioResult {
  // material-only at fixed areas, area-only with that material, simultaneous
  std::vector<ScenarioRow> rows;
  BruteForceResult brute_force;
  bool brute_force_agrees = false;
  bool sizing_beats_material_only = false;    // J2 <= (1 + slack) J1
  bool simultaneous_beats_sizing = false;     // J3 <= (1 + slack) J2
  double slack = 0.01;

  bool ordering_holds() const {
    return sizing_beats_material_only && simultaneous_beats_sizing;
  }
};

/// Runs the three design scenarios. Scenario 1 fixes every area at
/// `fixed_area` and optimizes the material only; scenario 2 sizes the truss
/// with scenario 1's material; scenario 3 optimizes both and snaps.
ScenarioResult run_scenarios(const ProblemSpec& spec, const MaterialDatabase& db,
                             double fixed_area, std::uint64_t seed,
                             double slack = 0.01);

struct RefinementRow {
  std::string database;  // "full" or the joined class list
  double j_raw = 0.0;
  std::string material;
  std::string cls;
  double confidence = 0.0;
  double j_star = 0.0;
  Eigen::VectorXd areas;
  bool feasible = false;
  Properties max_reconstruction_error = Properties::Zero();
};

struct RefinementResult {
  RefinementRow full;
  RefinementRow subset;
  VaeModel subset_model;
};

/// Optimizes with `model` on `db`, then trains a fresh VAE on the rows of
/// the given classes and repeats the optimization with it.
RefinementResult run_subset_refinement(const ProblemSpec& spec, const MaterialDatabase& db,
                                       const VaeModel& model,
                                       const std::set<std::string>& classes,
                                       const TrainConfig& train_config, std::uint64_t seed);

nlohmann::json scenarios_to_json(const ScenarioResult& result);
nlohmann::json refinement_to_json(const RefinementResult& result);
/// scenario,material,class,confidence,J,feasible,A_0..A_{N-1}
void write_scenario_table(std::ostream& out, const ScenarioResult& result);
/// database,J,material,class,confidence,J_star,feasible,A_0..A_{N-1}
void write_refinement_table(std::ostream& out, const RefinementResult& result);

}  // namespace trussmat

#endif  // TRUSSMAT_EXPERIMENTS_HPP
