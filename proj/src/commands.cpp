#include "trussmat/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <set>

#include "trussmat/errors.hpp"
#include "trussmat/experiments.hpp"
#include "trussmat/materials.hpp"
#include "trussmat/optimizer.hpp"
#include "trussmat/truss.hpp"

namespace trussmat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kCommands = {"train",    "inspect", "optimize",
                                         "scenario", "subset",  "brute-force"};

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json config_json(const Options& o) {
  return {{"epochs", o.train.epochs},
          {"vae_lr", o.train.lr},
          {"beta", o.train.beta},
          {"vae_hidden", o.train.hidden},
          {"cost_limit", optional_json(o.cost_limit)},
          {"mass_limit", optional_json(o.mass_limit)},
          {"safety_factor", o.safety_factor},
          {"area_min", o.area_min},
          {"area_max", o.area_max},
          {"tol", o.tol},
          {"p", o.p},
          {"t0", o.t0},
          {"mu", o.mu},
          {"design_lr", o.design_lr},
          {"max_iters", o.max_iters},
          {"eps_star", o.eps_star},
          {"fixed_area", o.fixed_area},
          {"classes", o.classes},
          {"attribute", o.attribute},
          {"resolution", o.resolution}};
}

class Run {
 public:
  Run(const Options& opts, std::ostream& out)
      : opts_(opts), out_(out), manifest_(make_manifest(opts)), dir_(resolve_out_dir(opts)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw InputError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    write_json(kManifestFile, manifest_);
  }

  const Options& opts() const { return opts_; }
  const json& manifest() const { return manifest_; }
  std::ostream& out() { return out_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void write_json(const std::string& name, const json& j) const {
    std::ofstream f = open(name);
    f << j.dump(2) << "\n";
  }

  void write_csv(const std::string& name, const std::function<void(std::ostream&)>& body) const {
    std::ofstream f = open(name);
    f << "# command: " << manifest_["command"].get<std::string>() << "\n"
      << "# seed: " << manifest_["seed"].get<std::uint64_t>() << "\n"
      << "# config_hash: " << manifest_["config_hash"].get<std::string>() << "\n";
    body(f);
  }

  void note_written(const std::string& name) { out_ << "wrote " << path(name).string() << "\n"; }

 private:
  std::ofstream open(const std::string& name) const {
    std::ofstream f(dir_ / name);
    if (!f) throw InputError("cannot write '" + (dir_ / name).string() + "'");
    return f;
  }

  const Options& opts_;
  std::ostream& out_;
  json manifest_;
  fs::path dir_;
};

VaeModel require_model(const Options& o) {
  if (o.model.empty()) throw InputError(o.command + ": --model is required");
  return load_model(o.model);
}

ProblemSpec problem(const Options& o, std::shared_ptr<const VaeModel> decoder) {
  ProblemSpec spec(resolve_truss(o.truss));
  spec.decoder = std::move(decoder);
  spec.cost_limit = o.cost_limit;
  spec.mass_limit = o.mass_limit;
  spec.safety_factor = o.safety_factor;
  spec.area_min = o.area_min;
  spec.area_max = o.area_max;
  spec.p = o.p;
  spec.t0 = o.t0;
  spec.mu = o.mu;
  spec.lr = o.design_lr;
  spec.max_iters = o.max_iters;
  spec.eps_star = o.eps_star;
  spec.feasibility_tol = o.tol;
  spec.validate();
  return spec;
}

void print_reconstruction(std::ostream& out, const ReconstructionReport& r) {
  out << std::left << std::setw(18) << "material" << std::right;
  for (int a = 0; a < 4; ++a) out << std::setw(9) << (std::string("d") + attribute_label(a) + "%");
  out << "\n" << std::fixed << std::setprecision(2);
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    out << std::left << std::setw(18) << r.names[i] << std::right;
    for (int a = 0; a < 4; ++a) out << std::setw(9) << r.percent_error(static_cast<Eigen::Index>(i), a);
    out << "\n";
  }
  out << std::left << std::setw(18) << "max" << std::right;
  for (int a = 0; a < 4; ++a) out << std::setw(9) << r.max_error(a);
  out << "\n";
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
}

ExitCode cmd_train(Run& run) {
  const Options& o = run.opts();
  const MaterialDatabase db = resolve_database(o.db);
  TrainConfig cfg = o.train;
  cfg.seed = o.seed;
  const TrainResult result = train(db, cfg);

  save_model(run.path("model.json").string(), result.model, run.manifest());
  run.note_written("model.json");
  run.write_csv("loss_history.csv",
                [&](std::ostream& f) { write_loss_history(f, result.loss_history); });
  run.note_written("loss_history.csv");
  const ReconstructionReport recon = reconstruction_report(result.model, db);
  run.write_csv("reconstruction.csv",
                [&](std::ostream& f) { write_reconstruction_report(f, recon); });
  run.note_written("reconstruction.csv");

  run.out() << "final loss " << result.loss_history.back() << " after " << cfg.epochs
            << " epochs\n";
  print_reconstruction(run.out(), recon);
  return ExitCode::kOk;
}

ExitCode cmd_inspect(Run& run) {
  const Options& o = run.opts();
  const MaterialDatabase db = resolve_database(o.db);
  const VaeModel model = require_model(o);
  model.check_matches(db);

  run.write_csv("latent_scatter.csv",
                [&](std::ostream& f) { write_latent_scatter(f, model, db); });
  run.note_written("latent_scatter.csv");
  const Eigen::MatrixXd d = distance_matrix(model, db);
  run.write_csv("distance_matrix.csv",
                [&](std::ostream& f) { write_distance_matrix(f, d, db); });
  run.note_written("distance_matrix.csv");
  const LatentGrid grid = latent_grid(model, o.attribute, o.resolution);
  const std::string grid_name = std::string("latent_grid_") + attribute_label(grid.attribute) + ".csv";
  run.write_csv(grid_name, [&](std::ostream& f) { write_latent_grid(f, grid); });
  run.note_written(grid_name);

  const ClassSeparation sep = class_separation(d, db);
  run.out() << "intra-class mean distance " << sep.intra_mean << "\n"
            << "inter-class mean distance " << sep.inter_mean << "\n";
  const std::vector<std::string> classes = db.classes();
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      run.out() << classes[a] << " <-> " << classes[b] << " mean distance "
                << mean_class_distance(d, db, classes[a], classes[b]) << "\n";
    }
  }
  return ExitCode::kOk;
}

void print_report(std::ostream& out, const OptimizationReport& r) {
  out << "iterations " << r.iterations << (r.converged ? " (converged)" : " (iteration limit)")
      << "\n"
      << "z* = (" << r.z_star(0) << ", " << r.z_star(1) << "), J = " << r.j_raw << "\n";
  if (r.snapped) {
    out << "closest materials:\n";
    for (std::size_t k = 0; k < r.ranking.size() && k < 3; ++k) {
      out << "  " << r.ranking[k].name << " (" << r.ranking[k].cls << "), confidence "
          << r.ranking[k].confidence << "\n";
    }
    out << "snapped to " << r.snapped->name << ", J* = " << r.j_star << "\n"
        << "areas:";
    for (Eigen::Index k = 0; k < r.a_star.size(); ++k) out << ' ' << r.a_star(k);
    out << "\n";
  }
  out << "worst constraint " << (r.snapped ? r.final_constraints : r.raw_constraints).worst()
      << (r.feasible() ? " (feasible)" : " (INFEASIBLE)") << "\n";
}

ExitCode cmd_optimize(Run& run) {
  const Options& o = run.opts();
  const MaterialDatabase db = resolve_database(o.db);
  auto model = std::make_shared<const VaeModel>(require_model(o));
  model->check_matches(db);
  const ProblemSpec spec = problem(o, model);
  const OptimizationReport report = optimize(spec, db, o.seed);

  json j = report_to_json(report);
  j["manifest"] = run.manifest();
  run.write_json("report.json", j);
  run.note_written("report.json");
  run.write_csv("history.csv", [&](std::ostream& f) { write_history_csv(f, report.history); });
  run.note_written("history.csv");
  run.write_csv("reopt_history.csv",
                [&](std::ostream& f) { write_history_csv(f, report.reopt_history); });
  run.note_written("reopt_history.csv");
  print_report(run.out(), report);
  return report.feasible() ? ExitCode::kOk : ExitCode::kInfeasible;
}

ExitCode cmd_scenario(Run& run, std::ostream& err) {
  const Options& o = run.opts();
  const MaterialDatabase db = resolve_database(o.db);
  auto model = std::make_shared<const VaeModel>(require_model(o));
  model->check_matches(db);
  const ProblemSpec spec = problem(o, model);
  const ScenarioResult result = run_scenarios(spec, db, o.fixed_area, o.seed);

  json j = scenarios_to_json(result);
  j["manifest"] = run.manifest();
  run.write_json("scenarios.json", j);
  run.note_written("scenarios.json");
  run.write_csv("scenarios.csv", [&](std::ostream& f) { write_scenario_table(f, result); });
  run.note_written("scenarios.csv");

  for (const ScenarioRow& r : result.rows) {
    run.out() << std::left << std::setw(14) << r.label << std::setw(18) << r.material
              << std::right << " J = " << r.compliance << (r.feasible ? "" : " (infeasible)")
              << "\n";
  }
  if (result.brute_force.best >= 0) {
    run.out() << "brute force at fixed areas: "
              << result.brute_force.candidates[static_cast<std::size_t>(result.brute_force.best)].name
              << (result.brute_force_agrees ? " (agrees)" : " (DISAGREES)") << "\n";
  } else {
    run.out() << "brute force at fixed areas: no feasible material\n";
  }
  if (result.ordering_holds()) return ExitCode::kOk;
  if (!result.sizing_beats_material_only) {
    err << "ordering violated: J(area) > (1 + " << result.slack << ") J(material)\n";
  }
  if (!result.simultaneous_beats_sizing) {
    err << "ordering violated: J(simultaneous) > (1 + " << result.slack << ") J(area)\n";
  }
  return ExitCode::kCheckFailed;
}

ExitCode cmd_subset(Run& run) {
  const Options& o = run.opts();
  if (o.classes.empty()) throw InputError("subset: --classes is required");
  const MaterialDatabase db = resolve_database(o.db);
  const VaeModel model = require_model(o);
  const ProblemSpec spec = problem(o, nullptr);
  TrainConfig cfg = o.train;
  cfg.seed = o.seed;
  const std::set<std::string> classes(o.classes.begin(), o.classes.end());
  const RefinementResult result = run_subset_refinement(spec, db, model, classes, cfg, o.seed);

  json j = refinement_to_json(result);
  j["manifest"] = run.manifest();
  run.write_json("refinement.json", j);
  run.note_written("refinement.json");
  run.write_csv("refinement.csv", [&](std::ostream& f) { write_refinement_table(f, result); });
  run.note_written("refinement.csv");
  save_model(run.path("subset_model.json").string(), result.subset_model, run.manifest());
  run.note_written("subset_model.json");

  const int width = static_cast<int>(std::max(result.full.database.size(),
                                               result.subset.database.size())) + 2;
  for (const RefinementRow* r : {&result.full, &result.subset}) {
    run.out() << std::left << std::setw(width) << r->database << std::setw(18) << r->material
              << std::right << " J = " << r->j_raw << ", J* = " << r->j_star
              << (r->feasible ? "" : " (infeasible)") << "\n";
  }
  return result.subset.feasible ? ExitCode::kOk : ExitCode::kInfeasible;
}

ExitCode cmd_brute_force(Run& run, std::ostream& err) {
  const Options& o = run.opts();
  const MaterialDatabase db = resolve_database(o.db);
  const ProblemSpec spec = problem(o, nullptr);
  const Eigen::VectorXd areas = Eigen::VectorXd::Constant(spec.truss.member_count(), o.fixed_area);
  BruteForceResult result;
  try {
    result = brute_force_material_search(spec, db, areas);
  } catch (const InfeasibleError& e) {
    err << e.what() << "\n";
    return ExitCode::kInfeasible;
  }
  run.write_csv("brute_force.csv", [&](std::ostream& f) {
    f << "material,class,J,worst_constraint,feasible\n" << std::setprecision(10);
    for (const MaterialCandidate& c : result.candidates) {
      f << c.name << ',' << c.cls << ',' << c.compliance << ',' << c.constraints.worst() << ','
        << (c.feasible ? 1 : 0) << '\n';
    }
  });
  run.note_written("brute_force.csv");
  const MaterialCandidate& best = result.candidates[static_cast<std::size_t>(result.best)];
  run.out() << "best feasible material " << best.name << " (" << best.cls << "), J = "
            << best.compliance << "\n";
  return ExitCode::kOk;
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json make_manifest(const Options& opts) {
  json m;
  m["command"] = opts.command;
  m["seed"] = opts.seed;
  m["inputs"] = {{"db", opts.db}, {"truss", opts.truss}, {"model", opts.model}};
  m["config"] = config_json(opts);
  m["config_hash"] = fnv1a_hex(json{{"inputs", m["inputs"]}, {"config", m["config"]}}.dump());
  return m;
}

fs::path resolve_out_dir(const Options& opts) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return kDefaultOutDir;
}

ExitCode run_command(const Options& opts, std::ostream& out, std::ostream& err) {
  try {
    if (!kCommands.contains(opts.command)) {
      err << "unknown command '" << opts.command << "'\n";
      return ExitCode::kInput;
    }
    Run run(opts, out);
    if (opts.command == "train") return cmd_train(run);
    if (opts.command == "inspect") return cmd_inspect(run);
    if (opts.command == "optimize") return cmd_optimize(run);
    if (opts.command == "scenario") return cmd_scenario(run, err);
    if (opts.command == "subset") return cmd_subset(run);
    return cmd_brute_force(run, err);
  } catch (const AnalysisError& e) {
    err << "structural analysis failed: " << e.what() << "\n";
    return ExitCode::kInput;
  } catch (const SingularMatrixError& e) {
    err << "structural analysis failed: " << e.what() << "\n";
    return ExitCode::kInput;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return ExitCode::kInput;
  } catch (const ContractError& e) {
    err << "invalid setting: " << e.what() << "\n";
    return ExitCode::kInput;
  } catch (const InfeasibleError& e) {
    err << e.what() << "\n";
    return ExitCode::kInfeasible;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return ExitCode::kNumeric;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return ExitCode::kInternal;
  }
}

}  // namespace trussmat
