#ifndef TRUSSMAT_TESTS_SUPPORT_HPP
#define TRUSSMAT_TESTS_SUPPORT_HPP

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "trussmat/truss.hpp"
#include "trussmat/vae.hpp"

namespace testing {

// Three bars meeting at a loaded free node below three pinned supports.
inline trussmat::Truss three_bar(double fx = 3e3, double fy = -1e4) {
  std::vector<Eigen::Vector2d> nodes = {{-1.0, 1.0}, {0.0, 1.0}, {1.0, 1.0}, {0.2, 0.0}};
  std::vector<trussmat::Member> members = {{0, 3}, {1, 3}, {2, 3}};
  Eigen::VectorXd loads = Eigen::VectorXd::Zero(8);
  loads(6) = fx;
  loads(7) = fy;
  return trussmat::Truss(std::move(nodes), std::move(members), {0, 1, 2, 3, 4, 5},
                         std::move(loads));
}

// Statically determinate truss grown one node at a time: node 0 pinned,
// node 1 on a vertical roller, every later node tied to two earlier ones.
// Loads are random on every free DOF.
inline trussmat::Truss random_determinate_truss(std::mt19937_64& rng, int node_count) {
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::uniform_real_distribution<double> load(-1e4, 1e4);
  std::vector<Eigen::Vector2d> nodes = {{0.0, 0.0}, {1.5, 0.0}};
  std::vector<trussmat::Member> members = {{0, 1}};
  while (static_cast<int>(nodes.size()) < node_count) {
    const Eigen::Vector2d p(coord(rng), coord(rng) + 1.5);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(nodes.size()) - 1);
    const int a = pick(rng);
    int b = pick(rng);
    if (a == b) continue;
    const Eigen::Vector2d u = (nodes[a] - p).normalized();
    const Eigen::Vector2d v = (nodes[b] - p).normalized();
    const double sine = std::abs(u.x() * v.y() - u.y() * v.x());
    if ((nodes[a] - p).norm() < 0.3 || (nodes[b] - p).norm() < 0.3 || sine < 0.3) continue;
    const int n = static_cast<int>(nodes.size());
    nodes.push_back(p);
    members.push_back({a, n});
    members.push_back({b, n});
  }
  Eigen::VectorXd loads(2 * node_count);
  for (Eigen::Index i = 0; i < loads.size(); ++i) loads(i) = load(rng);
  return trussmat::Truss(std::move(nodes), std::move(members), {0, 1, 3}, std::move(loads));
}

// Central differences of f with respect to every entry of `param`, which f
// reads through the same reference.
inline Eigen::MatrixXd central_difference(const std::function<double()>& f,
                                          Eigen::MatrixXd& param, double step) {
  Eigen::MatrixXd g(param.rows(), param.cols());
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    const double saved = param(i);
    const double h = step * std::max(1.0, std::abs(saved));
    param(i) = saved + h;
    const double up = f();
    param(i) = saved - h;
    const double down = f();
    param(i) = saved;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// A quickly trained VAE on the nine-material table.
inline trussmat::VaeModel small_model(std::uint64_t seed = 1, int epochs = 400, int hidden = 32) {
  trussmat::TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = epochs;
  cfg.hidden = hidden;
  return trussmat::train(trussmat::table1_database(), cfg).model;
}

}  // namespace testing

#endif  // TRUSSMAT_TESTS_SUPPORT_HPP
