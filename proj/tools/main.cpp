#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "trussmat/commands.hpp"

namespace {

void add_common(CLI::App* cmd, trussmat::Options& o) {
  cmd->add_option("--db", o.db, "material database CSV or 'materials_table1'");
  cmd->add_option("--out", o.out_dir, "output directory (default $TRUSSMAT_OUT_DIR or ./trussmat_out)");
  cmd->add_option("--seed", o.seed, "random seed");
}

void add_training(CLI::App* cmd, trussmat::Options& o) {
  cmd->add_option("--epochs", o.train.epochs, "VAE training epochs");
  cmd->add_option("--lr", o.train.lr, "VAE Adam learning rate");
  cmd->add_option("--beta", o.train.beta, "KL weight");
  cmd->add_option("--hidden", o.train.hidden, "VAE hidden width");
}

void add_problem(CLI::App* cmd, trussmat::Options& o) {
  cmd->add_option("--truss", o.truss, "truss file, 'midcant6' or 'tower47'");
  cmd->add_option("--cost-limit", o.cost_limit, "cost budget C* in $");
  cmd->add_option("--mass-limit", o.mass_limit, "mass budget M* in kg");
  cmd->add_option("--fs", o.safety_factor, "safety factor");
  cmd->add_option("--amin", o.area_min, "minimum member area, m^2");
  cmd->add_option("--amax", o.area_max, "maximum member area, m^2");
  cmd->add_option("--tol", o.tol, "feasibility tolerance on the constraints");
  cmd->add_option("--p", o.p, "p-norm exponent (even)");
  cmd->add_option("--t0", o.t0, "initial barrier sharpness");
  cmd->add_option("--mu", o.mu, "barrier growth factor per iteration");
  cmd->add_option("--design-lr", o.design_lr, "Adagrad learning rate");
  cmd->add_option("--max-iters", o.max_iters, "iteration limit");
  cmd->add_option("--eps", o.eps_star, "stop when the step norm falls below this");
}

void add_model(CLI::App* cmd, trussmat::Options& o) {
  cmd->add_option("--model", o.model, "trained model file")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simultaneous truss sizing and material selection through a VAE latent space"};
  app.require_subcommand(1);
  trussmat::Options o;

  auto* train = app.add_subcommand("train", "train the material VAE");
  add_common(train, o);
  add_training(train, o);

  auto* inspect = app.add_subcommand("inspect", "export latent scatter, distances and a property grid");
  add_common(inspect, o);
  add_model(inspect, o);
  inspect->add_option("--attribute", o.attribute, "grid attribute: E, C, rho or Y");
  inspect->add_option("--resolution", o.resolution, "grid points per axis");

  auto* optimize = app.add_subcommand("optimize", "optimize areas and material, then snap");
  add_common(optimize, o);
  add_model(optimize, o);
  add_problem(optimize, o);

  auto* scenario = app.add_subcommand("scenario", "material-only, area-only and simultaneous runs");
  add_common(scenario, o);
  add_model(scenario, o);
  add_problem(scenario, o);
  scenario->add_option("--area", o.fixed_area, "fixed member area for the material-only run, m^2");

  auto* subset = app.add_subcommand("subset", "retrain on a class subset and re-optimize");
  add_common(subset, o);
  add_model(subset, o);
  add_problem(subset, o);
  add_training(subset, o);
  subset->add_option("--classes", o.classes, "classes to keep")->required()->delimiter(',');

  auto* brute = app.add_subcommand("brute-force", "evaluate every material at fixed areas");
  add_common(brute, o);
  add_problem(brute, o);
  brute->add_option("--area", o.fixed_area, "member area, m^2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(trussmat::ExitCode::kInput);
  }

  o.command = app.get_subcommands().front()->get_name();
  return static_cast<int>(trussmat::run_command(o, std::cout, std::cerr));
}
