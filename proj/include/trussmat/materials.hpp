#ifndef TRUSSMAT_MATERIALS_HPP
#define TRUSSMAT_MATERIALS_HPP

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace trussmat {

/// Property vector ζ = (E, C, ρ, Y) in SI units.
using Properties = Eigen::Vector4d;

enum Attribute : int { kModulus = 0, kCost = 1, kDensity = 2, kYield = 3 };

/// Short column labels in attribute order: "E", "C", "rho", "Y".
const char* attribute_label(int attribute);
/// Parses "E", "C"/"cost", "rho"/"density", "Y"/"yield". Throws ContractError.
int parse_attribute(const std::string& name);

struct Material {
  std::string name;
  std::string cls;
  double modulus = 0.0;  // Pa
  double cost = 0.0;     // $/kg
  double density = 0.0;  // kg/m³
  double yield = 0.0;    // Pa

  Properties properties() const { return {modulus, cost, density, yield}; }
  bool operator==(const Material&) const = default;
};

/// Per-attribute min-max scaler.
struct MinMaxScaler {
  Properties min = Properties::Zero();
  Properties max = Properties::Ones();

  template <typename Derived>
  auto scale(const Eigen::MatrixBase<Derived>& zeta) const {
    return ((zeta - min).array() / (max - min).array()).matrix();
  }
  template <typename Derived>
  auto unscale(const Eigen::MatrixBase<Derived>& s) const {
    return (min.array() + s.array() * (max - min).array()).matrix();
  }
  Properties range() const { return max - min; }
  bool operator==(const MinMaxScaler&) const = default;
};

/// Immutable, validated list of materials with a scaler fitted over it.
class MaterialDatabase {
 public:
  /// Validates every row and fits the scaler. Throws InputError naming the
  /// offending row (1-based) or attribute.
  explicit MaterialDatabase(std::vector<Material> materials);

  const std::vector<Material>& materials() const { return materials_; }
  const Material& operator[](std::size_t i) const { return materials_[i]; }
  std::size_t size() const { return materials_.size(); }
  const MinMaxScaler& scaler() const { return scaler_; }

  /// Distinct class labels in first-appearance order.
  std::vector<std::string> classes() const;
  /// Index of the material with this name, or -1.
  int find(const std::string& name) const;

  /// Properties of all materials as rows (size() x 4).
  Eigen::MatrixX4d property_matrix() const;
  /// Scaled properties as rows, each in [0, 1].
  Eigen::MatrixX4d scaled_matrix() const;

  Properties scale(const Properties& zeta) const { return scaler_.scale(zeta); }
  Properties unscale(const Properties& s) const { return scaler_.unscale(s); }

  bool operator==(const MaterialDatabase&) const = default;

 private:
  std::vector<Material> materials_;
  MinMaxScaler scaler_;
};

/// Header required of database files.
inline constexpr const char* kDatabaseHeader =
    "name,class,E_Pa,cost_per_kg,density_kg_m3,yield_Pa";

MaterialDatabase parse_database(std::istream& in, const std::string& source);
MaterialDatabase load_database(const std::string& path);
void write_database(std::ostream& out, const MaterialDatabase& db);
void save_database(const std::string& path, const MaterialDatabase& db);

/// Rows whose class is in `classes`, rescaled over the survivors. Throws
/// InputError when fewer than two materials survive.
MaterialDatabase filter_by_class(const MaterialDatabase& db,
                                 const std::set<std::string>& classes);

/// The nine-material curated table shipped with the project.
MaterialDatabase table1_database();
/// CSV text of table1_database().
const char* table1_csv();

/// `materials_table1` resolves to the bundled table, anything else is a path.
MaterialDatabase resolve_database(const std::string& name_or_path);

}  // namespace trussmat

#endif  // TRUSSMAT_MATERIALS_HPP
