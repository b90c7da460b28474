#include "trussmat/experiments.hpp"

#include <cmath>
#include <memory>
#include <ostream>
#include <sstream>

#include "trussmat/errors.hpp"

namespace trussmat {

namespace {

std::string number(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

void write_areas(std::ostream& out, const Eigen::VectorXd& areas) {
  for (Eigen::Index k = 0; k < areas.size(); ++k) out << ',' << number(areas(k));
}

void write_area_header(std::ostream& out, Eigen::Index n) {
  for (Eigen::Index k = 0; k < n; ++k) out << ",A_" << k;
}

nlohmann::json areas_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

double top_confidence(const OptimizationReport& report) {
  return report.ranking.empty() ? 1.0 : report.ranking.front().confidence;
}

RefinementRow refinement_row(const std::string& label, const OptimizationReport& report,
                             const ReconstructionReport& recon) {
  RefinementRow row;
  row.database = label;
  row.j_raw = report.j_raw;
  row.material = report.snapped->name;
  row.cls = report.snapped->cls;
  row.confidence = top_confidence(report);
  row.j_star = report.j_star;
  row.areas = report.a_star;
  row.feasible = report.feasible();
  row.max_reconstruction_error = recon.max_error;
  return row;
}

}  // namespace

ScenarioResult run_scenarios(const ProblemSpec& spec, const MaterialDatabase& db,
                             double fixed_area, std::uint64_t seed, double slack) {
  if (!(fixed_area >= spec.area_min && fixed_area <= spec.area_max)) {
    throw ContractError("run_scenarios: fixed area outside [A_min, A_max]");
  }
  if (!(slack >= 0.0)) throw ContractError("run_scenarios: slack must be non-negative");
  ScenarioResult result;
  result.slack = slack;

  const Eigen::VectorXd fixed =
      Eigen::VectorXd::Constant(spec.truss.member_count(), fixed_area);

  DesignMode material_only;
  material_only.fixed_areas = fixed;
  OptimizationReport first = run(spec, seed, material_only);
  snap_and_reoptimize(spec, db, first, seed);
  result.rows.push_back({"material", first.snapped->name, first.snapped->cls,
                         top_confidence(first), first.j_star, first.a_star,
                         first.final_constraints, first.snapped_feasible});

  DesignMode sizing;
  sizing.fixed_material = *first.snapped;
  const OptimizationReport second = run(spec, seed, sizing);
  result.rows.push_back({"area", first.snapped->name, first.snapped->cls, 1.0,
                         second.j_raw, second.areas, second.raw_constraints,
                         second.raw_feasible});

  const OptimizationReport third = optimize(spec, db, seed);
  result.rows.push_back({"simultaneous", third.snapped->name, third.snapped->cls,
                         top_confidence(third), third.j_star, third.a_star,
                         third.final_constraints, third.snapped_feasible});

  try {
    result.brute_force = brute_force_material_search(spec, db, fixed);
    result.brute_force_agrees =
        db[static_cast<std::size_t>(result.brute_force.best)].name == first.snapped->name;
  } catch (const InfeasibleError&) {
    result.brute_force_agrees = false;
  }

  const double j1 = result.rows[0].compliance;
  const double j2 = result.rows[1].compliance;
  const double j3 = result.rows[2].compliance;
  result.sizing_beats_material_only = j2 <= (1.0 + slack) * j1;
  result.simultaneous_beats_sizing = j3 <= (1.0 + slack) * j2;
  return result;
}

RefinementResult run_subset_refinement(const ProblemSpec& spec, const MaterialDatabase& db,
                                       const VaeModel& model,
                                       const std::set<std::string>& classes,
                                       const TrainConfig& train_config, std::uint64_t seed) {
  model.check_matches(db);
  const MaterialDatabase subset = filter_by_class(db, classes);

  ProblemSpec full_spec = spec;
  full_spec.decoder = std::make_shared<const VaeModel>(model);
  const OptimizationReport full = optimize(full_spec, db, seed);

  TrainResult trained = train(subset, train_config);
  ProblemSpec subset_spec = spec;
  subset_spec.decoder = std::make_shared<const VaeModel>(trained.model);
  const OptimizationReport refined = optimize(subset_spec, subset, seed);

  std::string label;
  for (const std::string& c : classes) label += (label.empty() ? "" : "+") + c;

  RefinementResult result;
  result.full = refinement_row("full", full, reconstruction_report(model, db));
  result.subset =
      refinement_row(label, refined, reconstruction_report(trained.model, subset));
  result.subset_model = std::move(trained.model);
  return result;
}

nlohmann::json scenarios_to_json(const ScenarioResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ScenarioRow& r : result.rows) {
    rows.push_back({{"scenario", r.label},
                    {"material", r.material},
                    {"class", r.cls},
                    {"confidence", r.confidence},
                    {"J", r.compliance},
                    {"feasible", r.feasible},
                    {"areas", areas_json(r.areas)}});
  }
  nlohmann::json brute = nlohmann::json::array();
  for (const MaterialCandidate& c : result.brute_force.candidates) {
    brute.push_back({{"material", c.name},
                     {"class", c.cls},
                     {"J", c.compliance},
                     {"worst_constraint", c.constraints.worst()},
                     {"feasible", c.feasible}});
  }
  nlohmann::json j;
  j["rows"] = rows;
  j["brute_force"] = brute;
  j["brute_force_best"] =
      result.brute_force.best < 0
          ? nlohmann::json(nullptr)
          : nlohmann::json(result.brute_force
                               .candidates[static_cast<std::size_t>(result.brute_force.best)]
                               .name);
  j["brute_force_agrees"] = result.brute_force_agrees;
  j["slack"] = result.slack;
  j["sizing_beats_material_only"] = result.sizing_beats_material_only;
  j["simultaneous_beats_sizing"] = result.simultaneous_beats_sizing;
  j["ordering_holds"] = result.ordering_holds();
  return j;
}

nlohmann::json refinement_to_json(const RefinementResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const RefinementRow* r : {&result.full, &result.subset}) {
    const Properties& e = r->max_reconstruction_error;
    rows.push_back({{"database", r->database},
                    {"J", r->j_raw},
                    {"material", r->material},
                    {"class", r->cls},
                    {"confidence", r->confidence},
                    {"J_star", r->j_star},
                    {"feasible", r->feasible},
                    {"areas", areas_json(r->areas)},
                    {"max_reconstruction_error_percent",
                     {{"E", e(kModulus)}, {"C", e(kCost)}, {"rho", e(kDensity)}, {"Y", e(kYield)}}}});
  }
  return {{"rows", rows}};
}

void write_scenario_table(std::ostream& out, const ScenarioResult& result) {
  const Eigen::Index n = result.rows.empty() ? 0 : result.rows.front().areas.size();
  out << "scenario,material,class,confidence,J,feasible";
  write_area_header(out, n);
  out << '\n';
  for (const ScenarioRow& r : result.rows) {
    out << r.label << ',' << r.material << ',' << r.cls << ',' << number(r.confidence)
        << ',' << number(r.compliance) << ',' << (r.feasible ? 1 : 0);
    write_areas(out, r.areas);
    out << '\n';
  }
}

void write_refinement_table(std::ostream& out, const RefinementResult& result) {
  out << "database,J,material,class,confidence,J_star,feasible";
  write_area_header(out, result.full.areas.size());
  out << '\n';
  for (const RefinementRow* r : {&result.full, &result.subset}) {
    out << r->database << ',' << number(r->j_raw) << ',' << r->material << ',' << r->cls
        << ',' << number(r->confidence) << ',' << number(r->j_star) << ','
        << (r->feasible ? 1 : 0);
    write_areas(out, r->areas);
    out << '\n';
  }
}

}  // namespace trussmat
