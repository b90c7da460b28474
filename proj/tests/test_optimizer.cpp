#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>

#include "support.hpp"
#include "trussmat/errors.hpp"
#include "trussmat/optimizer.hpp"

using namespace trussmat;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::shared_ptr<const VaeModel> shared_decoder() {
  static const auto model = std::make_shared<const VaeModel>(testing::small_model());
  return model;
}

ProblemSpec three_bar_spec() {
  ProblemSpec spec(testing::three_bar());
  spec.decoder = shared_decoder();
  spec.cost_limit = 400.0;
  spec.safety_factor = 2.0;
  spec.area_min = 1e-5;
  spec.area_max = 1e-2;
  return spec;
}

// Plain single-member inputs on a tape.
struct OneMember {
  ad::Tape tape;
  Eigen::VectorXd lengths = Eigen::VectorXd::Ones(1);
  ad::Var area(double a) { return tape.constant(Eigen::MatrixXd::Constant(1, 1, a)); }
};

void randomize(DesignNets& nets, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (DesignNet* net : {&nets.areas, &nets.material})
    for (nn::Matrix* m : net->parameters())
      for (Eigen::Index i = 0; i < m->size(); ++i) (*m)(i) = n(rng);
}

// Barrier derivative from the tape.
double barrier_slope(double g, double t) {
  ad::Tape tape;
  const ad::Var v = tape.variable(g);
  tape.backward(barrier(v, t));
  return tape.grad(v)(0, 0);
}

MaterialDatabase two_material_db() {
  return MaterialDatabase({{"Stiff", "A", 2e11, 1.0, 7800.0, 4e8},
                           {"Light", "B", 7e10, 2.0, 2700.0, 2e8}});
}

}  // namespace

TEST_CASE("zero final layer gives mid-range areas and the latent origin") {
  DesignNets nets = DesignNets::init(3, 20, 1);
  for (DesignNet* net : {&nets.areas, &nets.material}) {
    net->layers.back().weight.setZero();
    net->layers.back().bias.setZero();
  }
  const Eigen::VectorXd a = forward_areas(nets.areas, 1e-9, 1e-2);
  for (Eigen::Index k = 0; k < a.size(); ++k)
    CHECK(a(k) == doctest::Approx((1e-9 + 1e-2) / 2.0).epsilon(1e-15));
  CHECK(forward_latent(nets.material) == Latent::Zero());
}

TEST_CASE("network outputs respect the design bounds for any weights") {
  std::mt19937_64 rng(42);
  DesignNets nets = DesignNets::init(6, 20, 0);
  for (int draw = 0; draw < 1000; ++draw) {
    randomize(nets, rng, draw % 2 ? 1.0 : 50.0);
    const Eigen::VectorXd a = forward_areas(nets.areas, 1e-9, 1e-2);
    const Latent z = forward_latent(nets.material);
    CHECK(a.minCoeff() >= 1e-9);
    CHECK(a.maxCoeff() <= 1e-2);
    CHECK(z.cwiseAbs().maxCoeff() <= 3.0);
  }
}

TEST_CASE("tape and plain forward passes agree") {
  const DesignNets nets = DesignNets::init(5, 20, 9);
  ad::Tape tape;
  const ad::Var a = forward_areas(tape, nets.areas, 1e-6, 1e-2, true);
  const ad::Var z = forward_latent(tape, nets.material, true);
  CHECK((a.value().col(0) - forward_areas(nets.areas, 1e-6, 1e-2)).norm() < 1e-18);
  CHECK((z.value().row(0).transpose() - forward_latent(nets.material)).norm() < 1e-15);
  CHECK(a.rows() == 5);
  CHECK(a.cols() == 1);
}

TEST_CASE("cost and mass constraint examples") {
  OneMember m;
  const ad::Var g_c = cost_constraint(m.area(1e-3), m.lengths, m.tape.constant(8000.0),
                                      m.tape.constant(2.0), 60.0);
  CHECK(g_c.scalar() == doctest::Approx(16.0 / 60.0 - 1.0).epsilon(1e-14));
  CHECK(g_c.scalar() == doctest::Approx(-0.7333).epsilon(1e-4));

  const ad::Var g_m = mass_constraint(m.area(1e-3), m.lengths, m.tape.constant(8000.0), 40.0);
  CHECK(g_m.scalar() == doctest::Approx(-0.8).epsilon(1e-14));

  const ad::Var at_limit = mass_constraint(m.area(5e-3), m.lengths, m.tape.constant(8000.0), 40.0);
  CHECK(std::abs(at_limit.scalar()) < 1e-14);
  const ad::Var cost_at_limit = cost_constraint(m.area(3.75e-3), m.lengths, m.tape.constant(8000.0),
                                                m.tape.constant(2.0), 60.0);
  CHECK(std::abs(cost_at_limit.scalar()) < 1e-14);

  const Eigen::VectorXd lengths = Eigen::Vector3d(1.0, 2.0, 0.5);
  const Eigen::MatrixXd a = Eigen::Vector3d(1e-3, 2e-3, 4e-3);
  const double once = mass_constraint(m.tape.constant(a), lengths, m.tape.constant(2700.0), 40.0).scalar();
  const double twice =
      mass_constraint(m.tape.constant(2.0 * a), lengths, m.tape.constant(2700.0), 40.0).scalar();
  CHECK(twice + 1.0 == doctest::Approx(2.0 * (once + 1.0)).epsilon(1e-14));

  // Strictly increasing in every area.
  const ad::Var av = m.tape.variable(a);
  m.tape.backward(cost_constraint(av, lengths, m.tape.constant(2700.0), m.tape.constant(2.2), 60.0));
  CHECK((m.tape.grad(av).array() > 0.0).all());
}

TEST_CASE("buckling constraint examples") {
  OneMember m;
  const double e_mod = 2e11, a = 1e-4, fs = 4.0;
  const ad::Var tension = buckling_constraint(m.tape.constant(Eigen::MatrixXd::Constant(2, 1, 5e3)),
                                              Eigen::Vector2d(1.0, 2.0),
                                              m.tape.constant(Eigen::MatrixXd::Constant(2, 1, a)),
                                              m.tape.constant(e_mod), fs, 6);
  CHECK(tension.scalar() == -1.0 / fs);

  // Compressive force at the Euler load divided by F_s.
  const double euler = kPi * kPi * e_mod * a * a / (4.0 * 1.0);
  const ad::Var boundary = buckling_constraint(m.tape.constant(-euler / fs), m.lengths, m.area(a),
                                               m.tape.constant(e_mod), fs, 6);
  CHECK(boundary.scalar() >= -1e-15);
  CHECK(std::abs(boundary.scalar()) < 1e-12);

  const Eigen::VectorXd ratios =
      buckling_ratios(Eigen::Vector2d(-euler, 10.0), Eigen::Vector2d(1.0, 1.0),
                      Eigen::Vector2d(a, a), e_mod);
  CHECK(ratios(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ratios(1) < 0.0);

  // Decreasing in the area of the compressed member.
  const ad::Var av = m.tape.variable(Eigen::MatrixXd(Eigen::Vector2d(a, a)));
  m.tape.backward(buckling_constraint(m.tape.constant(Eigen::MatrixXd(Eigen::Vector2d(-euler, -0.5 * euler))),
                                      Eigen::Vector2d(1.0, 1.0), av, m.tape.constant(e_mod), fs, 6));
  CHECK(m.tape.grad(av)(0) < 0.0);
}

TEST_CASE("yield constraint examples") {
  OneMember m;
  const double y = 2.5e8, a = 1e-4, fs = 4.0;
  const ad::Var compression = yield_constraint(m.tape.constant(-1e5), m.area(a), m.tape.constant(y), fs, 6);
  CHECK(compression.scalar() == -1.0 / fs);
  const ad::Var boundary = yield_constraint(m.tape.constant(y * a / fs), m.area(a), m.tape.constant(y), fs, 6);
  CHECK(boundary.scalar() >= -1e-15);
  CHECK(std::abs(boundary.scalar()) < 1e-12);

  const ad::Var av = m.tape.variable(a);
  m.tape.backward(yield_constraint(m.tape.constant(1e4), av, m.tape.constant(y), fs, 6));
  CHECK(m.tape.grad(av)(0, 0) < 0.0);
}

TEST_CASE("barrier examples") {
  CHECK(barrier_value(-1.0, 1.0) == 0.0);
  CHECK(barrier_value(-0.25, 2.0) == doctest::Approx(0.5 * std::log(4.0)).epsilon(1e-15));
  // Linear branch evaluated at the junction gives the same value.
  CHECK(2.0 * -0.25 - 0.5 * std::log(0.25) + 0.5 == doctest::Approx(0.5 * std::log(4.0)).epsilon(1e-15));

  for (double t : {1.0, 2.0, 5.0}) {
    // g0 itself is on the log branch, the next double up on the linear one.
    const double g0 = -1.0 / (t * t);
    const double above = std::nextafter(g0, 0.0);
    CHECK(std::abs(barrier_value(g0, t) - barrier_value(above, t)) < 1e-10);
    CHECK(std::abs(barrier_slope(g0, t) - barrier_slope(above, t)) < 1e-10);
    CHECK(barrier_slope(g0, t) == doctest::Approx(t).epsilon(1e-12));
    CHECK(barrier_slope(0.5, t) == t);
    CHECK(std::isfinite(barrier_value(1e6, t)));
  }
  CHECK_THROWS_AS(barrier_value(-1.0, 0.0), ContractError);
}

TEST_CASE("barrier is convex") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> g(-3.0, 1.0), lam(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double t = 0.5 + 5.0 * lam(rng);
    const double a = std::min(g(rng), -1e-3), b = g(rng), l = lam(rng);
    const double mid = barrier_value(l * a + (1 - l) * b, t);
    CHECK(mid <= l * barrier_value(a, t) + (1 - l) * barrier_value(b, t) + 1e-12);
  }
}

TEST_CASE("full-pipeline gradient matches finite differences") {
  ProblemSpec spec = three_bar_spec();
  std::mt19937_64 rng(77);
  for (int state = 0; state < 5; ++state) {
    DesignNets nets = DesignNets::init(3, 20, 100 + state);
    randomize(nets, rng, 0.5);
    const double t = 3.0 * std::pow(1.5, state);

    ad::Tape tape;
    std::vector<ad::Var> params;
    const TapeEvaluation ev = record_design_loss(tape, spec, {}, nets, t, &params);
    tape.backward(ev.loss);

    std::vector<nn::Matrix*> weights = nets.areas.parameters();
    for (nn::Matrix* m : nets.material.parameters()) weights.push_back(m);
    REQUIRE(weights.size() == params.size());

    const auto loss = [&] {
      ad::Tape t2;
      return record_design_loss(t2, spec, {}, nets, t, nullptr).loss.scalar();
    };
    Eigen::VectorXd analytic, numeric;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const Eigen::MatrixXd g = tape.grad(params[i]);
      const Eigen::MatrixXd fd = testing::central_difference(loss, *weights[i], 1e-6);
      analytic.conservativeResize(analytic.size() + g.size());
      numeric.conservativeResize(numeric.size() + fd.size());
      analytic.tail(g.size()) = g.reshaped();
      numeric.tail(fd.size()) = fd.reshaped();
    }
    const Eigen::Index n_area = [&] {
      Eigen::Index n = 0;
      for (nn::Matrix* m : nets.areas.parameters()) n += m->size();
      return n;
    }();
    INFO("state " << state);
    CHECK(testing::relative_error(analytic.head(n_area), numeric.head(n_area)) < 1e-4);
    CHECK(testing::relative_error(analytic.tail(analytic.size() - n_area),
                                  numeric.tail(numeric.size() - n_area)) < 1e-4);
    CHECK(analytic.tail(analytic.size() - n_area).norm() > 0.0);
  }
}

TEST_CASE("confidence examples") {
  Eigen::MatrixX2d emb(3, 2);
  emb << 1.0, 0.0, 0.0, 2.0, -4.0, 0.0;
  const auto r = confidence_ranking(Latent::Zero(), emb);
  REQUIRE(r.size() == 3);
  CHECK(r[0].index == 0);
  CHECK(r[0].confidence == 0.75);
  CHECK(r[1].confidence == 0.5);
  CHECK(r[2].confidence == 0.0);
  CHECK(r[2].distance == 4.0);

  const auto exact = confidence_ranking(Latent(0.0, 2.0), emb);
  CHECK(exact[0].index == 1);
  CHECK(exact[0].confidence == 1.0);

  Eigen::MatrixX2d tied(3, 2);
  tied << 0.0, 3.0, 1.0, 0.0, 0.0, 1.0;
  const auto t = confidence_ranking(Latent::Zero(), tied);
  CHECK(t[0].index == 1);
  CHECK(t[1].index == 2);
}

TEST_CASE("top-ranked material is the nearest neighbour") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const Eigen::MatrixX2d emb = shared_decoder()->embeddings;
  for (int trial = 0; trial < 100; ++trial) {
    const Latent z(u(rng), u(rng));
    Eigen::Index nearest = 0;
    (emb.rowwise() - z.transpose()).rowwise().squaredNorm().minCoeff(&nearest);
    const auto r = confidence_ranking(z, *shared_decoder(), table1_database());
    CHECK(r.front().index == nearest);
    CHECK(r.front().name == table1_database()[static_cast<std::size_t>(nearest)].name);
    CHECK(r.back().confidence == 0.0);
    for (std::size_t i = 1; i < r.size(); ++i) {
      CHECK(r[i - 1].confidence >= r[i].confidence);
      CHECK(r[i].confidence >= 0.0);
      CHECK(r[i].confidence <= 1.0);
    }
  }
}

TEST_CASE("ranking order is invariant to increasing transforms of distance") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixX2d emb(7, 2), squashed(7, 2);
    for (Eigen::Index i = 0; i < 7; ++i) {
      emb.row(i) << u(rng), u(rng);
      const double d = emb.row(i).norm();
      // Same direction, distance d -> d^3 + d.
      squashed.row(i) = emb.row(i) / d * (d * d * d + d);
    }
    const auto a = confidence_ranking(Latent::Zero(), emb);
    const auto b = confidence_ranking(Latent::Zero(), squashed);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].index == b[i].index);
  }
}

TEST_CASE("brute-force material search") {
  ProblemSpec spec(testing::three_bar());
  spec.mass_limit = 40.0;
  const Eigen::VectorXd areas = Eigen::VectorXd::Constant(3, 1e-3);

  const MaterialDatabase db = two_material_db();
  const BruteForceResult r = brute_force_material_search(spec, db, areas);
  REQUIRE(r.candidates.size() == 2);
  CHECK(r.best == 0);
  CHECK(r.candidates[0].compliance < r.candidates[1].compliance);
  CHECK(r.candidates[0].compliance ==
        doctest::Approx(analyze(spec.truss, areas, 2e11).compliance).epsilon(1e-12));

  // A light limit leaves only the aluminium-like material feasible.
  spec.mass_limit = 20.0;
  const BruteForceResult light = brute_force_material_search(spec, db, areas);
  CHECK_FALSE(light.candidates[0].feasible);
  CHECK(light.best == 1);

  // A strictly dominated addition changes nothing.
  spec.mass_limit = 40.0;
  MaterialDatabase bigger({db[0], db[1], {"Worse", "C", 6e10, 2.5, 7900.0, 1.5e8}});
  CHECK(brute_force_material_search(spec, bigger, areas).best == 0);

  spec.mass_limit = 1.0;
  CHECK_THROWS_AS(brute_force_material_search(spec, db, areas), InfeasibleError);
}

TEST_CASE("problem validation") {
  ProblemSpec spec(testing::three_bar());
  CHECK_THROWS_AS(spec.validate(), ContractError);
  spec.cost_limit = 60.0;
  CHECK_NOTHROW(spec.validate());
  spec.p = 5;
  CHECK_THROWS_AS(spec.validate(), ContractError);
  spec.p = 6;
  spec.area_min = 1e-1;
  CHECK_THROWS_AS(spec.validate(), ContractError);
  spec.area_min = 1e-9;
  CHECK_THROWS_AS(run(spec, 0), ContractError);  // no decoder for a material search
}

TEST_CASE("an under-restrained truss aborts with the iteration") {
  ProblemSpec spec(Truss({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1}, {1, 2}, {2, 3}, {3, 0}},
                         {0, 1, 3}, Eigen::VectorXd::Constant(8, 1.0)));
  spec.mass_limit = 40.0;
  DesignMode mode;
  mode.fixed_material = two_material_db()[0];
  try {
    run(spec, 0, mode);
    FAIL("expected AnalysisError");
  } catch (const AnalysisError& e) {
    CHECK(e.iteration() == 0);
  }
}

TEST_CASE("runs are deterministic and never touch the decoder") {
  ProblemSpec spec = three_bar_spec();
  spec.max_iters = 200;
  const nlohmann::json before = model_to_json(*spec.decoder);
  const OptimizationReport a = optimize(spec, table1_database(), 3);
  const OptimizationReport b = optimize(spec, table1_database(), 3);
  CHECK(report_to_json(a).dump() == report_to_json(b).dump());
  CHECK(model_to_json(*spec.decoder) == before);
  CHECK(a.history.size() == static_cast<std::size_t>(a.iterations));
}

TEST_CASE("a slack budget drives every area to the upper bound") {
  ProblemSpec spec(testing::three_bar());
  spec.cost_limit = 1e9;
  spec.safety_factor = 1.0;
  spec.area_min = 1e-5;
  spec.area_max = 1e-2;
  DesignMode mode;
  mode.fixed_material = two_material_db()[0];
  // The sigmoid output only approaches 1, so give Adagrad room to get close.
  spec.max_iters = 20000;
  const OptimizationReport r = run(spec, 4, mode);
  CHECK(r.raw_feasible);
  CHECK(r.areas.minCoeff() > 0.99 * spec.area_max);
  for (std::size_t k = 1; k < r.history.size(); ++k)
    CHECK(r.history[k].compliance <= r.history[k - 1].compliance);
}

TEST_CASE("snapping fills the report") {
  ProblemSpec spec = three_bar_spec();
  spec.max_iters = 300;
  const OptimizationReport r = optimize(spec, table1_database(), 11);
  REQUIRE(r.snapped.has_value());
  REQUIRE(r.ranking.size() == 9);
  CHECK(r.snapped->name == r.ranking.front().name);
  CHECK(r.ranking.front().confidence <= 1.0);
  CHECK(r.ranking.back().confidence == 0.0);
  CHECK(r.a_star.size() == 3);
  CHECK(r.a_star.minCoeff() >= spec.area_min);
  CHECK(r.a_star.maxCoeff() <= spec.area_max);
  CHECK(std::isfinite(r.j_star));
  CHECK(r.reopt_history.size() > 0);

  // The snapped design re-evaluates to the recorded values.
  const DesignEvaluation check = evaluate_design(spec, r.a_star, r.snapped->properties());
  CHECK(check.compliance == doctest::Approx(r.j_star).epsilon(1e-12));
  CHECK(check.constraints.worst() == doctest::Approx(r.final_constraints.worst()).epsilon(1e-12));
  CHECK(r.snapped_feasible == check.constraints.satisfied(spec.feasibility_tol));

  const nlohmann::json j = report_to_json(r);
  CHECK(j.contains("z_star"));
  CHECK(j.contains("ranking"));
  CHECK(j["snapped"]["name"] == r.snapped->name);

  std::ostringstream csv;
  write_history_csv(csv, r.history);
  CHECK(csv.str().rfind("iteration,t,J,g_cost,g_mass,g_buckling,g_yield,", 0) == 0);
}

TEST_CASE("material-only runs keep the given areas") {
  ProblemSpec spec = three_bar_spec();
  spec.max_iters = 100;
  DesignMode mode;
  mode.fixed_areas = Eigen::VectorXd::Constant(3, 2e-3);
  OptimizationReport r = run(spec, 1, mode);
  CHECK(r.mode == "material-only");
  CHECK(r.areas == *mode.fixed_areas);
  snap_and_reoptimize(spec, table1_database(), r, 1);
  CHECK(r.a_star == *mode.fixed_areas);
  CHECK(r.reopt_history.empty());
}
