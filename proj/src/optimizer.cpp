#include "trussmat/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "trussmat/errors.hpp"

namespace trussmat {

namespace {

constexpr double kPiSquared = std::numbers::pi * std::numbers::pi;

bool active(const std::optional<double>& limit) { return limit.has_value(); }

ConstraintValues true_constraints(const ProblemSpec& spec, const Eigen::VectorXd& areas,
                                  const Eigen::VectorXd& forces, const Properties& props) {
  const Eigen::VectorXd& lengths = spec.truss.lengths();
  const double volume = areas.dot(lengths);
  ConstraintValues c;
  if (spec.cost_limit) c.cost = props(kDensity) * props(kCost) / *spec.cost_limit * volume - 1.0;
  if (spec.mass_limit) c.mass = props(kDensity) / *spec.mass_limit * volume - 1.0;
  const double inv_fs = 1.0 / spec.safety_factor;
  const Eigen::VectorXd buckling =
      buckling_ratios(forces, lengths, areas, props(kModulus));
  const Eigen::VectorXd yield =
      forces.cwiseQuotient(props(kYield) * areas);
  c.buckling = std::max(0.0, buckling.maxCoeff()) - inv_fs;
  c.yield = std::max(0.0, yield.maxCoeff()) - inv_fs;
  return c;
}

ad::Var row_to_column(const ad::Var& row) {
  return row.cols() == 1 ? row : ad::transpose(row);
}

nlohmann::json constraints_json(const ConstraintValues& c) {
  nlohmann::json j;
  j["cost"] = std::isnan(c.cost) ? nlohmann::json(nullptr) : nlohmann::json(c.cost);
  j["mass"] = std::isnan(c.mass) ? nlohmann::json(nullptr) : nlohmann::json(c.mass);
  j["buckling"] = c.buckling;
  j["yield"] = c.yield;
  return j;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

nlohmann::json history_json(const std::vector<IterationRecord>& history) {
  nlohmann::json rows = nlohmann::json::array();
  for (const IterationRecord& r : history) {
    rows.push_back({{"iteration", r.iteration},
                    {"t", r.t},
                    {"J", r.compliance},
                    {"constraints", constraints_json(r.constraints)},
                    {"g_buckling_relaxed", r.g_buckling_relaxed},
                    {"g_yield_relaxed", r.g_yield_relaxed},
                    {"z", {r.z(0), r.z(1)}},
                    {"loss", r.loss},
                    {"step_norm", r.step_norm}});
  }
  return rows;
}

const char* mode_name(const DesignMode& mode) {
  if (mode.fixed_areas && mode.fixed_material) return "evaluation";
  if (mode.fixed_areas) return "material-only";
  if (mode.fixed_material) return "area-only";
  return "simultaneous";
}

}  // namespace

// ---------------------------------------------------------------------------
// Design networks

DesignNet DesignNet::glorot(Eigen::Index outputs, Eigen::Index hidden,
                            std::mt19937_64& rng) {
  DesignNet net;
  net.layers.push_back(nn::glorot_dense(1, hidden, rng));
  net.layers.push_back(nn::glorot_dense(hidden, hidden, rng));
  net.layers.push_back(nn::glorot_dense(hidden, outputs, rng));
  return net;
}

Eigen::RowVectorXd DesignNet::outputs() const {
  nn::Matrix x = nn::Matrix::Ones(1, 1);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = nn::apply(layers[l], x);
    if (l + 1 < layers.size()) {
      x = x.cwiseMax(0.0);
    } else {
      x = (1.0 + (-x.array()).exp()).inverse().matrix();
    }
  }
  return x;
}

ad::Var DesignNet::outputs(ad::Tape& tape, bool trainable,
                           std::vector<ad::Var>* params) const {
  ad::Var x = tape.constant(1.0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const nn::BoundDense bound = nn::bind(tape, layers[l], trainable);
    if (params && trainable) {
      params->push_back(bound.weight);
      params->push_back(bound.bias);
    }
    x = bound(x);
    x = l + 1 < layers.size() ? ad::relu(x) : ad::sigmoid(x);
  }
  return x;
}

std::vector<nn::Matrix*> DesignNet::parameters() {
  std::vector<nn::Matrix*> out;
  for (nn::Dense& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

DesignNets DesignNets::init(Eigen::Index members, Eigen::Index hidden,
                            std::uint64_t seed) {
  if (members < 1 || hidden < 1) {
    throw ContractError("DesignNets::init: members and hidden must be positive");
  }
  std::mt19937_64 rng(seed);
  DesignNets nets;
  nets.areas = DesignNet::glorot(members, hidden, rng);
  nets.material = DesignNet::glorot(2, hidden, rng);
  return nets;
}

Eigen::VectorXd forward_areas(const DesignNet& net, double area_min, double area_max) {
  return (area_min + net.outputs().array() * (area_max - area_min)).matrix().transpose();
}

ad::Var forward_areas(ad::Tape& tape, const DesignNet& net, double area_min,
                      double area_max, bool trainable, std::vector<ad::Var>* params) {
  const ad::Var o = net.outputs(tape, trainable, params);
  return row_to_column((area_max - area_min) * o + area_min);
}

Latent forward_latent(const DesignNet& net) {
  const Eigen::RowVectorXd o = net.outputs();
  if (o.size() != 2) throw ShapeError("forward_latent: material net must have 2 outputs");
  return (-3.0 + 6.0 * o.array()).matrix().transpose();
}

ad::Var forward_latent(ad::Tape& tape, const DesignNet& net, bool trainable,
                       std::vector<ad::Var>* params) {
  const ad::Var o = net.outputs(tape, trainable, params);
  if (o.size() != 2) throw ShapeError("forward_latent: material net must have 2 outputs");
  return 6.0 * o - 3.0;
}

// ---------------------------------------------------------------------------
// Constraints and barrier

ad::Var cost_constraint(const ad::Var& areas, const Eigen::VectorXd& lengths,
                        const ad::Var& density, const ad::Var& cost, double cost_limit) {
  ad::Tape& tape = areas.tape();
  const ad::Var volume = ad::dot(areas, tape.constant(lengths));
  return ad::mul(ad::mul(density, cost), volume) * (1.0 / cost_limit) - 1.0;
}

ad::Var mass_constraint(const ad::Var& areas, const Eigen::VectorXd& lengths,
                        const ad::Var& density, double mass_limit) {
  ad::Tape& tape = areas.tape();
  const ad::Var volume = ad::dot(areas, tape.constant(lengths));
  return ad::mul(density, volume) * (1.0 / mass_limit) - 1.0;
}

ad::Var buckling_constraint(const ad::Var& forces, const Eigen::VectorXd& lengths,
                            const ad::Var& areas, const ad::Var& modulus,
                            double safety_factor, int p) {
  ad::Tape& tape = forces.tape();
  const ad::Var num = ad::mul(forces, tape.constant(lengths.cwiseAbs2()));
  const ad::Var den = ad::mul(modulus, ad::mul(areas, areas));
  const ad::Var ratio = ad::div(num, den) * (-4.0 / kPiSquared);
  return ad::pnorm(ratio, p) - 1.0 / safety_factor;
}

ad::Var yield_constraint(const ad::Var& forces, const ad::Var& areas,
                         const ad::Var& yield, double safety_factor, int p) {
  const ad::Var ratio = ad::div(forces, ad::mul(yield, areas));
  return ad::pnorm(ratio, p) - 1.0 / safety_factor;
}

Eigen::VectorXd buckling_ratios(const Eigen::VectorXd& forces,
                                const Eigen::VectorXd& lengths,
                                const Eigen::VectorXd& areas, double modulus) {
  return (-4.0 / kPiSquared) * forces.cwiseProduct(lengths.cwiseAbs2())
                                   .cwiseQuotient(modulus * areas.cwiseAbs2());
}

double barrier_value(double g, double t) {
  if (!(t > 0.0)) throw ContractError("barrier: t must be positive");
  if (g <= -1.0 / (t * t)) return -std::log(-g) / t;
  return t * g - std::log(1.0 / (t * t)) / t + 1.0 / t;
}

ad::Var barrier(const ad::Var& g, double t) {
  if (g.size() != 1) throw ShapeError("barrier: g must be a scalar");
  if (!(t > 0.0)) throw ContractError("barrier: t must be positive");
  const double gv = g.scalar();
  const bool log_branch = gv <= -1.0 / (t * t);
  const double y = barrier_value(gv, t);
  const std::size_t gi = g.id();
  return g.tape().record(ad::Matrix::Constant(1, 1, y), {g},
                         [gi, gv, t, log_branch](ad::Tape& tp, std::size_t self) {
                           const double slope = log_branch ? -1.0 / (t * gv) : t;
                           tp.accumulate(gi, ad::Matrix::Constant(
                                                 1, 1, slope * tp.adjoint(self)(0, 0)));
                         });
}

// ---------------------------------------------------------------------------
// Problem

void ProblemSpec::validate() const {
  if (!cost_limit && !mass_limit) {
    throw ContractError("problem needs a cost limit or a mass limit");
  }
  if (cost_limit && !(*cost_limit > 0.0)) throw ContractError("cost limit must be positive");
  if (mass_limit && !(*mass_limit > 0.0)) throw ContractError("mass limit must be positive");
  if (!(safety_factor >= 1.0)) throw ContractError("safety factor must be at least 1");
  if (!(area_min > 0.0 && area_min < area_max)) {
    throw ContractError("area bounds must satisfy 0 < A_min < A_max");
  }
  if (p < 2 || p % 2 != 0) throw ContractError("p must be an even integer >= 2");
  if (!(t0 > 0.0)) throw ContractError("t0 must be positive");
  if (!(mu > 1.0)) throw ContractError("mu must exceed 1");
  if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
  if (max_iters < 1) throw ContractError("max_iters must be at least 1");
  if (!(eps_star >= 0.0)) throw ContractError("eps_star must be non-negative");
  if (!(feasibility_tol >= 0.0)) throw ContractError("feasibility tolerance must be non-negative");
  if (hidden < 1) throw ContractError("design-network width must be positive");
}

double ConstraintValues::worst() const {
  double w = std::max(buckling, yield);
  if (!std::isnan(cost)) w = std::max(w, cost);
  if (!std::isnan(mass)) w = std::max(w, mass);
  return w;
}

DesignEvaluation evaluate_design(const ProblemSpec& spec, const Eigen::VectorXd& areas,
                                 const Properties& props) {
  const Analysis a = analyze(spec.truss, areas, props(kModulus));
  DesignEvaluation out;
  out.compliance = a.compliance;
  out.forces = a.forces;
  out.constraints = true_constraints(spec, areas, a.forces, props);
  return out;
}

TapeEvaluation evaluate_loss(const ProblemSpec& spec, const ad::Var& areas,
                             const ad::Var& props, double t) {
  ad::Tape& tape = areas.tape();
  TapeEvaluation ev;
  ev.areas = areas;
  ev.props = props;
  const ad::Var modulus = ad::element(props, kModulus);
  const ad::Var cost = ad::element(props, kCost);
  const ad::Var density = ad::element(props, kDensity);
  const ad::Var yield = ad::element(props, kYield);

  const ad::Var k = assemble_stiffness(spec.truss, areas, modulus);
  const ad::Var f = tape.constant(spec.truss.reduced_loads());
  const ad::Var u = solve_displacements(k, f);
  ev.compliance = compliance(f, u);
  ev.forces = member_forces(spec.truss, u, areas, modulus);

  const Eigen::VectorXd& lengths = spec.truss.lengths();
  ad::Var loss = ev.compliance;
  if (active(spec.cost_limit)) {
    ev.g_cost = cost_constraint(areas, lengths, density, cost, *spec.cost_limit);
    loss = loss + barrier(ev.g_cost, t);
  }
  if (active(spec.mass_limit)) {
    ev.g_mass = mass_constraint(areas, lengths, density, *spec.mass_limit);
    loss = loss + barrier(ev.g_mass, t);
  }
  ev.g_buckling =
      buckling_constraint(ev.forces, lengths, areas, modulus, spec.safety_factor, spec.p);
  ev.g_yield = yield_constraint(ev.forces, areas, yield, spec.safety_factor, spec.p);
  ev.loss = loss + barrier(ev.g_buckling, t) + barrier(ev.g_yield, t);
  return ev;
}

TapeEvaluation record_design_loss(ad::Tape& tape, const ProblemSpec& spec,
                                  const DesignMode& mode, const DesignNets& nets,
                                  double t, std::vector<ad::Var>* params) {
  ad::Var areas;
  if (mode.fixed_areas) {
    if (mode.fixed_areas->size() != spec.truss.member_count()) {
      throw ShapeError("fixed areas: expected " + std::to_string(spec.truss.member_count()) +
                       " entries, got " + std::to_string(mode.fixed_areas->size()));
    }
    areas = tape.constant(*mode.fixed_areas);
  } else {
    areas = forward_areas(tape, nets.areas, spec.area_min, spec.area_max, true, params);
  }

  ad::Var z, props;
  if (mode.fixed_material) {
    props = tape.constant(ad::Matrix(mode.fixed_material->properties().transpose()));
  } else {
    if (!spec.decoder) throw ContractError("material optimization needs a decoder");
    z = forward_latent(tape, nets.material, true, params);
    props = spec.decoder->decode(tape, z);
  }

  TapeEvaluation ev = evaluate_loss(spec, areas, props, t);
  ev.z = z;
  return ev;
}

// ---------------------------------------------------------------------------
// Optimization

OptimizationReport run(const ProblemSpec& spec, std::uint64_t seed,
                       const DesignMode& mode, const DesignNets* warm_start) {
  spec.validate();
  if (mode.fixed_areas && mode.fixed_material) {
    throw ContractError("run: nothing to optimize when areas and material are both fixed");
  }
  if (!mode.fixed_material && !spec.decoder) {
    throw ContractError("run: material optimization needs a decoder");
  }

  OptimizationReport report;
  report.mode = mode_name(mode);
  report.nets = warm_start ? *warm_start
                           : DesignNets::init(spec.truss.member_count(), spec.hidden, seed);
  if (report.nets.areas.layers.empty() ||
      report.nets.areas.layers.back().outputs() != spec.truss.member_count()) {
    throw ShapeError("run: area network does not match the truss member count");
  }

  std::vector<nn::Matrix*> weights;
  if (!mode.fixed_areas) {
    for (nn::Matrix* m : report.nets.areas.parameters()) weights.push_back(m);
  }
  if (!mode.fixed_material) {
    for (nn::Matrix* m : report.nets.material.parameters()) weights.push_back(m);
  }
  nn::Adagrad adagrad(spec.lr);

  double t = spec.t0;
  for (int k = 0; k < spec.max_iters; ++k) {
    ad::Tape tape;
    std::vector<ad::Var> params;
    TapeEvaluation ev;
    try {
      ev = record_design_loss(tape, spec, mode, report.nets, t, &params);
    } catch (const SingularMatrixError& e) {
      throw AnalysisError("iteration " + std::to_string(k) + ": " + e.what(),
                          static_cast<std::size_t>(k));
    }
    const double loss = ev.loss.scalar();
    if (!std::isfinite(loss)) {
      throw DivergenceError("optimization loss became non-finite at iteration " +
                                std::to_string(k),
                            static_cast<std::size_t>(k));
    }
    tape.backward(ev.loss);
    std::vector<nn::Matrix> grads;
    grads.reserve(params.size());
    for (const ad::Var& p : params) grads.push_back(tape.grad(p));

    IterationRecord rec;
    rec.iteration = k;
    rec.t = t;
    rec.compliance = ev.compliance.scalar();
    const Properties props = ev.props.value().transpose();
    rec.constraints = true_constraints(spec, ev.areas.value(), ev.forces.value(), props);
    rec.g_buckling_relaxed = ev.g_buckling.scalar();
    rec.g_yield_relaxed = ev.g_yield.scalar();
    if (ev.z.valid()) rec.z = ev.z.value().transpose();
    rec.loss = loss;
    rec.step_norm = adagrad.step(weights, grads);
    report.history.push_back(rec);

    t = spec.t0 * std::pow(spec.mu, k + 1);
    if (rec.step_norm < spec.eps_star) {
      report.converged = true;
      break;
    }
  }
  report.iterations = static_cast<int>(report.history.size());

  report.areas = mode.fixed_areas
                     ? *mode.fixed_areas
                     : forward_areas(report.nets.areas, spec.area_min, spec.area_max);
  if (mode.fixed_material) {
    report.properties = mode.fixed_material->properties();
  } else {
    report.z_star = forward_latent(report.nets.material);
    report.properties = spec.decoder->decode(report.z_star);
  }
  try {
    const DesignEvaluation ev = evaluate_design(spec, report.areas, report.properties);
    report.j_raw = ev.compliance;
    report.raw_constraints = ev.constraints;
  } catch (const SingularMatrixError& e) {
    throw AnalysisError(std::string("final design: ") + e.what(),
                        static_cast<std::size_t>(report.iterations));
  }
  report.raw_feasible = report.raw_constraints.satisfied(spec.feasibility_tol);
  return report;
}

std::vector<RankedMaterial> confidence_ranking(const Latent& z_star,
                                               const Eigen::MatrixX2d& embeddings) {
  const Eigen::Index n = embeddings.rows();
  if (n == 0) throw ContractError("confidence_ranking: no embeddings");
  Eigen::VectorXd d(n);
  for (Eigen::Index m = 0; m < n; ++m) d(m) = (embeddings.row(m).transpose() - z_star).norm();
  const double far = d.maxCoeff();
  std::vector<RankedMaterial> out(static_cast<std::size_t>(n));
  for (Eigen::Index m = 0; m < n; ++m) {
    RankedMaterial& r = out[static_cast<std::size_t>(m)];
    r.index = static_cast<int>(m);
    r.distance = d(m);
    r.confidence = far > 0.0 ? 1.0 - d(m) / far : 1.0;
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedMaterial& a, const RankedMaterial& b) {
    return a.confidence > b.confidence;
  });
  return out;
}

std::vector<RankedMaterial> confidence_ranking(const Latent& z_star, const VaeModel& model,
                                               const MaterialDatabase& db) {
  model.check_matches(db);
  std::vector<RankedMaterial> out = confidence_ranking(z_star, model.embeddings);
  for (RankedMaterial& r : out) {
    r.name = db[static_cast<std::size_t>(r.index)].name;
    r.cls = db[static_cast<std::size_t>(r.index)].cls;
  }
  return out;
}

void snap_and_reoptimize(const ProblemSpec& spec, const MaterialDatabase& db,
                         OptimizationReport& report, std::uint64_t seed) {
  if (!spec.decoder) throw ContractError("snap_and_reoptimize: needs a decoder");
  report.ranking = confidence_ranking(report.z_star, *spec.decoder, db);
  const Material& chosen = db[static_cast<std::size_t>(report.ranking.front().index)];
  report.snapped = chosen;

  if (report.mode == "material-only") {
    report.a_star = report.areas;
    report.reopt_history.clear();
  } else {
    DesignMode mode;
    mode.fixed_material = chosen;
    const OptimizationReport re = run(spec, seed, mode, &report.nets);
    report.a_star = re.areas;
    report.reopt_history = re.history;
  }
  try {
    const DesignEvaluation ev = evaluate_design(spec, report.a_star, chosen.properties());
    report.j_star = ev.compliance;
    report.final_constraints = ev.constraints;
  } catch (const SingularMatrixError& e) {
    throw AnalysisError(std::string("snapped design: ") + e.what(),
                        static_cast<std::size_t>(report.reopt_history.size()));
  }
  report.snapped_feasible = report.final_constraints.satisfied(spec.feasibility_tol);
}

OptimizationReport optimize(const ProblemSpec& spec, const MaterialDatabase& db,
                            std::uint64_t seed) {
  OptimizationReport report = run(spec, seed);
  snap_and_reoptimize(spec, db, report, seed);
  return report;
}

BruteForceResult brute_force_material_search(const ProblemSpec& spec,
                                             const MaterialDatabase& db,
                                             const Eigen::VectorXd& areas) {
  spec.validate();
  BruteForceResult out;
  for (std::size_t m = 0; m < db.size(); ++m) {
    const DesignEvaluation ev = evaluate_design(spec, areas, db[m].properties());
    MaterialCandidate c;
    c.name = db[m].name;
    c.cls = db[m].cls;
    c.compliance = ev.compliance;
    c.constraints = ev.constraints;
    c.feasible = ev.constraints.satisfied(spec.feasibility_tol);
    if (c.feasible && (out.best < 0 ||
                       c.compliance < out.candidates[static_cast<std::size_t>(out.best)].compliance)) {
      out.best = static_cast<int>(m);
    }
    out.candidates.push_back(std::move(c));
  }
  if (out.best < 0) {
    std::ostringstream msg;
    msg << "no feasible material at the given areas:";
    for (const MaterialCandidate& c : out.candidates) {
      msg << "\n  " << c.name << ": worst constraint " << c.constraints.worst();
    }
    throw InfeasibleError(msg.str());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

nlohmann::json report_to_json(const OptimizationReport& report) {
  nlohmann::json j;
  j["mode"] = report.mode;
  j["converged"] = report.converged;
  j["iterations"] = report.iterations;
  j["z_star"] = {report.z_star(0), report.z_star(1)};
  j["properties"] = {{"E", report.properties(kModulus)},
                     {"C", report.properties(kCost)},
                     {"rho", report.properties(kDensity)},
                     {"Y", report.properties(kYield)}};
  j["areas"] = vector_json(report.areas);
  j["J_raw"] = report.j_raw;
  j["raw_constraints"] = constraints_json(report.raw_constraints);
  j["raw_feasible"] = report.raw_feasible;

  nlohmann::json ranking = nlohmann::json::array();
  for (const RankedMaterial& r : report.ranking) {
    ranking.push_back({{"name", r.name},
                       {"class", r.cls},
                       {"distance", r.distance},
                       {"confidence", r.confidence}});
  }
  j["ranking"] = ranking;
  if (report.snapped) {
    j["snapped"] = {{"name", report.snapped->name}, {"class", report.snapped->cls}};
    j["A_star"] = vector_json(report.a_star);
    j["J_star"] = report.j_star;
    j["final_constraints"] = constraints_json(report.final_constraints);
    j["snapped_feasible"] = report.snapped_feasible;
  } else {
    j["snapped"] = nullptr;
  }
  j["feasible"] = report.feasible();
  j["history"] = history_json(report.history);
  j["reopt_history"] = history_json(report.reopt_history);
  return j;
}

void write_history_csv(std::ostream& out, const std::vector<IterationRecord>& history) {
  out << "iteration,t,J,g_cost,g_mass,g_buckling,g_yield,g_buckling_relaxed,"
         "g_yield_relaxed,z0,z1,loss,step_norm\n";
  const auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  for (const IterationRecord& r : history) {
    out << r.iteration << ',' << num(r.t) << ',' << num(r.compliance) << ','
        << num(r.constraints.cost) << ',' << num(r.constraints.mass) << ','
        << num(r.constraints.buckling) << ',' << num(r.constraints.yield) << ','
        << num(r.g_buckling_relaxed) << ',' << num(r.g_yield_relaxed) << ','
        << num(r.z(0)) << ',' << num(r.z(1)) << ',' << num(r.loss) << ','
        << num(r.step_norm) << '\n';
  }
}

}  // namespace trussmat
