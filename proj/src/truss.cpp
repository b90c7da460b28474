#include "trussmat/truss.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "trussmat/errors.hpp"

namespace trussmat {

Truss::Truss(std::vector<Eigen::Vector2d> nodes, std::vector<Member> members,
             std::vector<int> fixed_dofs, Eigen::VectorXd loads)
    : nodes_(std::move(nodes)),
      members_(std::move(members)),
      fixed_(std::move(fixed_dofs)),
      loads_(std::move(loads)) {
  const int n_nodes = static_cast<int>(nodes_.size());
  const int n_dofs = 2 * n_nodes;
  if (members_.empty()) throw GeometryError("truss has no members");
  if (loads_.size() != n_dofs) {
    throw GeometryError("load vector has " + std::to_string(loads_.size()) +
                        " entries, expected " + std::to_string(n_dofs));
  }

  std::sort(fixed_.begin(), fixed_.end());
  fixed_.erase(std::unique(fixed_.begin(), fixed_.end()), fixed_.end());
  for (int dof : fixed_) {
    if (dof < 0 || dof >= n_dofs) {
      throw GeometryError("fixed DOF " + std::to_string(dof) + " out of range");
    }
  }
  if (fixed_.size() < 3) {
    throw GeometryError("truss needs at least 3 fixed DOFs to remove rigid-body "
                        "modes, got " + std::to_string(fixed_.size()));
  }

  std::set<std::pair<int, int>> seen;
  lengths_.resize(static_cast<Eigen::Index>(members_.size()));
  for (std::size_t k = 0; k < members_.size(); ++k) {
    const Member& m = members_[k];
    if (m.i < 0 || m.i >= n_nodes || m.j < 0 || m.j >= n_nodes) {
      throw GeometryError("member " + std::to_string(k) + " references a missing node");
    }
    if (!seen.insert({std::min(m.i, m.j), std::max(m.i, m.j)}).second) {
      throw GeometryError("member " + std::to_string(k) + " duplicates nodes (" +
                          std::to_string(m.i) + ", " + std::to_string(m.j) + ")");
    }
    const double len = (nodes_[m.j] - nodes_[m.i]).norm();
    if (!(len > 0.0)) {
      throw GeometryError("member " + std::to_string(k) + " has zero length");
    }
    lengths_(static_cast<Eigen::Index>(k)) = len;
  }

  std::vector<int> reduced_index(n_dofs, -1);
  for (int dof = 0; dof < n_dofs; ++dof) {
    if (!std::binary_search(fixed_.begin(), fixed_.end(), dof)) {
      reduced_index[dof] = static_cast<int>(free_.size());
      free_.push_back(dof);
    }
  }

  reduced_loads_.resize(dof_count());
  for (Eigen::Index r = 0; r < dof_count(); ++r) reduced_loads_(r) = loads_(free_[r]);

  compat_ = Eigen::MatrixXd::Zero(member_count(), dof_count());
  for (std::size_t k = 0; k < members_.size(); ++k) {
    const Member& m = members_[k];
    const Eigen::Vector2d dir = (nodes_[m.j] - nodes_[m.i]) / lengths_(k);
    for (int axis = 0; axis < 2; ++axis) {
      const int ri = reduced_index[2 * m.i + axis];
      const int rj = reduced_index[2 * m.j + axis];
      if (ri >= 0) compat_(k, ri) -= dir(axis);
      if (rj >= 0) compat_(k, rj) += dir(axis);
    }
  }
}

Eigen::VectorXd Truss::expand(const Eigen::VectorXd& reduced) const {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(2 * node_count());
  for (Eigen::Index r = 0; r < dof_count(); ++r) full(free_[r]) = reduced(r);
  return full;
}

Truss Truss::rotated(double angle) const {
  const Eigen::Rotation2Dd rot(angle);
  std::vector<Eigen::Vector2d> nodes;
  Eigen::VectorXd loads(loads_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    nodes.push_back(rot * nodes_[n]);
    loads.segment<2>(2 * n) = rot * Eigen::Vector2d(loads_.segment<2>(2 * n));
  }
  return Truss(std::move(nodes), members_, fixed_, std::move(loads));
}

Analysis analyze(const Truss& truss, const Eigen::VectorXd& areas, double modulus) {
  if (areas.size() != truss.member_count()) {
    throw ShapeError("analyze: " + std::to_string(areas.size()) + " areas for " +
                     std::to_string(truss.member_count()) + " members");
  }
  const Eigen::MatrixXd k = stiffness_matrix<double>(truss, areas, modulus);
  Analysis out;
  out.displacements = Cholesky(k).solve(truss.reduced_loads());
  out.forces = member_forces<double>(truss, out.displacements, areas, modulus);
  out.compliance = truss.reduced_loads().dot(out.displacements);
  return out;
}

// ---------------------------------------------------------------------------
// Tape versions

ad::Var assemble_stiffness(const Truss& truss, const ad::Var& areas,
                           const ad::Var& modulus) {
  if (areas.rows() != truss.member_count() || areas.cols() != 1) {
    throw ShapeError("assemble_stiffness: areas must be (" +
                     std::to_string(truss.member_count()) + "x1)");
  }
  ad::Tape& tape = areas.tape();
  const ad::Var inv_length = tape.constant(truss.lengths().cwiseInverse());
  const ad::Var axial = ad::mul(ad::mul(modulus, areas), inv_length);
  return ad::weighted_gram(truss.compatibility(), axial);
}

ad::Var solve_displacements(const ad::Var& stiffness, const ad::Var& loads) {
  return ad::linear_solve(stiffness, loads);
}

ad::Var member_forces(const Truss& truss, const ad::Var& u, const ad::Var& areas,
                      const ad::Var& modulus) {
  ad::Tape& tape = u.tape();
  const ad::Var elongation = ad::matmul(tape.constant(truss.compatibility()), u);
  const ad::Var inv_length = tape.constant(truss.lengths().cwiseInverse());
  return ad::mul(ad::mul(ad::mul(modulus, areas), inv_length), elongation);
}

ad::Var compliance(const ad::Var& loads, const ad::Var& u) { return ad::dot(loads, u); }

// ---------------------------------------------------------------------------
// Files

namespace {

// Shortest text that parses back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string strip_comment(const std::string& line) {
  std::string s = line.substr(0, line.find('#'));
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

Truss parse_truss(std::istream& in, const std::string& source) {
  std::string line, section;
  std::size_t line_no = 0;
  std::map<int, int> node_index;
  std::vector<Eigen::Vector2d> nodes;
  std::vector<std::pair<int, int>> member_ids;
  std::vector<std::pair<int, char>> supports;
  std::vector<std::tuple<int, double, double>> loads;

  const auto fail = [&](const std::string& msg) {
    throw InputError(source + ": line " + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = strip_comment(line);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') fail("unterminated section header");
      section = text.substr(1, text.size() - 2);
      if (section != "nodes" && section != "members" && section != "supports" &&
          section != "loads") {
        fail("unknown section [" + section + "]");
      }
      continue;
    }
    std::istringstream row(text);
    if (section == "nodes") {
      int id;
      double x, y;
      if (!(row >> id >> x >> y)) fail("expected 'id x y'");
      if (!node_index.emplace(id, static_cast<int>(nodes.size())).second) {
        fail("duplicate node id " + std::to_string(id));
      }
      nodes.emplace_back(x, y);
    } else if (section == "members") {
      int id, i, j;
      if (!(row >> id >> i >> j)) fail("expected 'id i j'");
      member_ids.emplace_back(i, j);
    } else if (section == "supports") {
      int node;
      std::string dof;
      if (!(row >> node >> dof) || (dof != "x" && dof != "y")) {
        fail("expected 'node x|y'");
      }
      supports.emplace_back(node, dof[0]);
    } else if (section == "loads") {
      int node;
      double fx, fy;
      if (!(row >> node >> fx >> fy)) fail("expected 'node Fx Fy'");
      loads.emplace_back(node, fx, fy);
    } else {
      fail("data outside of a section");
    }
    std::string extra;
    if (row >> extra) fail("unexpected trailing field '" + extra + "'");
  }

  const auto lookup = [&](int id, const std::string& what) {
    auto it = node_index.find(id);
    if (it == node_index.end()) {
      throw InputError(source + ": " + what + " references unknown node " +
                       std::to_string(id));
    }
    return it->second;
  };

  std::vector<Member> members;
  for (auto [i, j] : member_ids) members.push_back({lookup(i, "member"), lookup(j, "member")});
  std::vector<int> fixed;
  for (auto [n, dof] : supports) fixed.push_back(2 * lookup(n, "support") + (dof == 'y'));
  Eigen::VectorXd f = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(nodes.size()));
  for (auto [n, fx, fy] : loads) {
    const int idx = lookup(n, "load");
    f(2 * idx) += fx;
    f(2 * idx + 1) += fy;
  }
  try {
    return Truss(std::move(nodes), std::move(members), std::move(fixed), std::move(f));
  } catch (const GeometryError& e) {
    throw GeometryError(source + ": " + e.what());
  }
}

Truss load_truss(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open truss file '" + path + "'");
  return parse_truss(in, path);
}

void write_truss(std::ostream& out, const Truss& truss) {
  out << "[nodes]\n";
  for (Eigen::Index n = 0; n < truss.node_count(); ++n) {
    out << n << " " << shortest(truss.nodes()[n].x()) << " " << shortest(truss.nodes()[n].y())
        << "\n";
  }
  out << "\n[members]\n";
  for (std::size_t k = 0; k < truss.members().size(); ++k) {
    out << k << " " << truss.members()[k].i << " " << truss.members()[k].j << "\n";
  }
  out << "\n[supports]\n";
  for (int dof : truss.fixed_dofs()) out << dof / 2 << " " << (dof % 2 ? "y" : "x") << "\n";
  out << "\n[loads]\n";
  for (Eigen::Index n = 0; n < truss.node_count(); ++n) {
    const double fx = truss.loads()(2 * n);
    const double fy = truss.loads()(2 * n + 1);
    if (fx != 0.0 || fy != 0.0) out << n << " " << shortest(fx) << " " << shortest(fy) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Bundled geometries

Truss midcant6() {
  std::vector<Eigen::Vector2d> nodes = {
      {0.0, 0.0}, {0.0, 0.8}, {1.0, 0.0}, {1.0, 0.8}, {2.0, 0.4}};
  std::vector<Member> members = {
      {0, 2},  // bottom chord
      {1, 3},  // top chord
      {3, 4},  // upper tip
      {2, 4},  // lower tip
      {2, 3},  // post
      {1, 2},  // diagonal
  };
  Eigen::VectorXd loads = Eigen::VectorXd::Zero(10);
  loads(9) = -1e4;
  return Truss(std::move(nodes), std::move(members), {0, 1, 2, 3}, std::move(loads));
}

Truss tower(const TowerParams& p) {
  if (p.panels < 1) throw GeometryError("tower needs at least one panel");
  std::vector<Eigen::Vector2d> nodes;
  for (int level = 0; level <= p.panels; ++level) {
    const double frac = static_cast<double>(level) / p.panels;
    const double half = 0.5 * (p.base_width + frac * (p.top_width - p.base_width));
    const double y = level * p.panel_height;
    nodes.emplace_back(-half, y);  // 2*level
    nodes.emplace_back(half, y);   // 2*level + 1
  }
  nodes.emplace_back(0.0, p.panels * p.panel_height + p.mast_height);
  const int apex = static_cast<int>(nodes.size()) - 1;

  std::vector<Member> members;
  for (int level = 0; level < p.panels; ++level) {
    const int l0 = 2 * level, r0 = l0 + 1, l1 = l0 + 2, r1 = l0 + 3;
    members.push_back({l0, l1});
    members.push_back({r0, r1});
    members.push_back({l1, r1});
    members.push_back({l0, r1});
    members.push_back({r0, l1});
  }
  members.push_back({2 * p.panels, apex});
  members.push_back({2 * p.panels + 1, apex});

  Eigen::VectorXd loads = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(nodes.size()));
  loads(2 * apex) = p.lateral_load;
  loads(2 * apex + 1) = p.vertical_load;
  return Truss(std::move(nodes), std::move(members), {0, 1, 2, 3}, std::move(loads));
}

Truss resolve_truss(const std::string& name_or_path) {
  if (name_or_path == "midcant6") return midcant6();
  if (name_or_path == "tower47") return tower();
  return load_truss(name_or_path);
}

}  // namespace trussmat
