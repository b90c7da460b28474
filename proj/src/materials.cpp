#include "trussmat/materials.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "trussmat/errors.hpp"

namespace trussmat {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_property(const std::string& text, const std::string& column,
                      std::size_t row, const std::string& source) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw InputError(source + ": row " + std::to_string(row) + ": column " +
                     column + " is not numeric: '" + text + "'");
  }
  if (!std::isfinite(value) || value <= 0.0) {
    throw InputError(source + ": row " + std::to_string(row) + ": column " +
                     column + " must be positive and finite, got '" + text +
                     "'");
  }
  return value;
}

constexpr const char* kTable1Csv =
    "name,class,E_Pa,cost_per_kg,density_kg_m3,yield_Pa\n"
    "A286 Iron,Steel,2.01E+11,5.18E+00,7.92E+03,6.20E+08\n"
    "AISI 304,Steel,1.90E+11,2.40E+00,8.00E+03,5.17E+08\n"
    "Gray Cast Iron,Steel,6.62E+10,6.48E-01,7.20E+03,1.52E+08\n"
    "3003-H16,Al Alloy,6.90E+10,2.18E+00,2.73E+03,1.80E+08\n"
    "5052-O,Al Alloy,7.00E+10,2.23E+00,2.68E+03,1.95E+08\n"
    "7050-T7651,Al Alloy,7.20E+10,2.33E+00,2.83E+03,5.50E+08\n"
    "Acrylic,Plastic,3.00E+09,2.80E+00,1.20E+03,7.30E+07\n"
    "ABS,Plastic,2.00E+09,2.91E+00,1.02E+03,3.00E+07\n"
    "PE HD,Plastic,1.07E+09,2.21E+00,9.52E+02,2.21E+07\n";

constexpr const char* kColumns[] = {"E_Pa", "cost_per_kg", "density_kg_m3",
                                    "yield_Pa"};

}  // namespace

const char* attribute_label(int attribute) {
  static constexpr const char* kLabels[] = {"E", "C", "rho", "Y"};
  if (attribute < 0 || attribute > 3) throw ContractError("attribute out of range");
  return kLabels[attribute];
}

int parse_attribute(const std::string& name) {
  if (name == "E" || name == "modulus") return kModulus;
  if (name == "C" || name == "cost") return kCost;
  if (name == "rho" || name == "density") return kDensity;
  if (name == "Y" || name == "yield") return kYield;
  throw ContractError("unknown attribute '" + name +
                      "' (expected E, C, rho or Y)");
}

MaterialDatabase::MaterialDatabase(std::vector<Material> materials)
    : materials_(std::move(materials)) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < materials_.size(); ++i) {
    const Material& m = materials_[i];
    const std::string where = "material " + std::to_string(i + 1) + " ('" +
                              m.name + "')";
    if (m.name.empty()) throw InputError(where + ": empty name");
    if (!names.insert(m.name).second) {
      throw InputError(where + ": duplicate name");
    }
    const Properties p = m.properties();
    for (int a = 0; a < 4; ++a) {
      if (!std::isfinite(p(a)) || p(a) <= 0.0) {
        throw InputError(where + ": " + kColumns[a] +
                         " must be positive and finite");
      }
    }
  }
  if (materials_.size() < 2) {
    throw InputError("database needs at least two materials to fit a scaler, got " +
                     std::to_string(materials_.size()));
  }
  const Eigen::MatrixX4d props = property_matrix();
  scaler_.min = props.colwise().minCoeff().transpose();
  scaler_.max = props.colwise().maxCoeff().transpose();
  for (int a = 0; a < 4; ++a) {
    if (!(scaler_.min(a) < scaler_.max(a))) {
      throw InputError(std::string("attribute ") + kColumns[a] +
                       " has a single value across the database; scaler is "
                       "degenerate");
    }
  }
}

std::vector<std::string> MaterialDatabase::classes() const {
  std::vector<std::string> out;
  for (const Material& m : materials_) {
    if (std::find(out.begin(), out.end(), m.cls) == out.end()) out.push_back(m.cls);
  }
  return out;
}

int MaterialDatabase::find(const std::string& name) const {
  for (std::size_t i = 0; i < materials_.size(); ++i) {
    if (materials_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Eigen::MatrixX4d MaterialDatabase::property_matrix() const {
  Eigen::MatrixX4d out(materials_.size(), 4);
  for (std::size_t i = 0; i < materials_.size(); ++i) {
    out.row(i) = materials_[i].properties().transpose();
  }
  return out;
}

Eigen::MatrixX4d MaterialDatabase::scaled_matrix() const {
  Eigen::MatrixX4d out(materials_.size(), 4);
  for (std::size_t i = 0; i < materials_.size(); ++i) {
    out.row(i) = scale(materials_[i].properties()).transpose();
  }
  return out;
}

MaterialDatabase parse_database(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<Material> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto fields = split_csv(text);
    if (!have_header) {
      std::string joined;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        joined += (i ? "," : "") + fields[i];
      }
      if (joined != kDatabaseHeader) {
        throw InputError(source + ": line " + std::to_string(line_no) +
                         ": header must be exactly '" + kDatabaseHeader +
                         "', got '" + text + "'");
      }
      have_header = true;
      continue;
    }
    const std::size_t row = rows.size() + 1;
    if (fields.size() != 6) {
      throw InputError(source + ": row " + std::to_string(row) + " (line " +
                       std::to_string(line_no) + "): expected 6 columns, got " +
                       std::to_string(fields.size()));
    }
    Material m;
    m.name = fields[0];
    m.cls = fields[1];
    if (m.name.empty()) {
      throw InputError(source + ": row " + std::to_string(row) + ": empty name");
    }
    m.modulus = parse_property(fields[2], kColumns[0], row, source);
    m.cost = parse_property(fields[3], kColumns[1], row, source);
    m.density = parse_property(fields[4], kColumns[2], row, source);
    m.yield = parse_property(fields[5], kColumns[3], row, source);
    for (const Material& prev : rows) {
      if (prev.name == m.name) {
        throw InputError(source + ": row " + std::to_string(row) +
                         ": duplicate name '" + m.name + "'");
      }
    }
    rows.push_back(std::move(m));
  }
  if (!have_header) throw InputError(source + ": missing header");
  try {
    return MaterialDatabase(std::move(rows));
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

MaterialDatabase load_database(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open material database '" + path + "'");
  return parse_database(in, path);
}

void write_database(std::ostream& out, const MaterialDatabase& db) {
  out << kDatabaseHeader << "\n";
  char buf[32];
  for (const Material& m : db.materials()) {
    out << m.name << "," << m.cls;
    for (double v : {m.modulus, m.cost, m.density, m.yield}) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << "," << buf;
    }
    out << "\n";
  }
}

void save_database(const std::string& path, const MaterialDatabase& db) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write material database '" + path + "'");
  write_database(out, db);
}

MaterialDatabase filter_by_class(const MaterialDatabase& db,
                                 const std::set<std::string>& classes) {
  std::vector<Material> kept;
  for (const Material& m : db.materials()) {
    if (classes.count(m.cls)) kept.push_back(m);
  }
  if (kept.size() < 2) {
    std::string list;
    for (const auto& c : classes) list += (list.empty() ? "" : ", ") + c;
    throw InputError("class subset {" + list + "} leaves " +
                     std::to_string(kept.size()) +
                     " material(s); at least two are required");
  }
  return MaterialDatabase(std::move(kept));
}

const char* table1_csv() { return kTable1Csv; }

MaterialDatabase table1_database() {
  std::istringstream in(kTable1Csv);
  return parse_database(in, "materials_table1");
}

MaterialDatabase resolve_database(const std::string& name_or_path) {
  if (name_or_path == "materials_table1") return table1_database();
  return load_database(name_or_path);
}

}  // namespace trussmat
