#ifndef TRUSSMAT_COMMANDS_HPP
#define TRUSSMAT_COMMANDS_HPP

// Command layer behind the trussmat executable. Each command reads its
// inputs, writes its outputs into one directory together with a
// manifest.json, and returns a process exit code.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trussmat/vae.hpp"

namespace trussmat {

enum class ExitCode : int {
  kOk = 0,
  kInternal = 1,     // unexpected failure
  kInput = 2,        // bad flags, unreadable or malformed input, singular geometry
  kInfeasible = 3,   // result violates a constraint beyond the tolerance
  kNumeric = 4,      // divergence
  kCheckFailed = 5,  // scenario ordering did not hold
};

inline constexpr const char* kOutDirEnv = "TRUSSMAT_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "trussmat_out";
inline constexpr const char* kManifestFile = "manifest.json";

struct Options {
  std::string command;  // train, inspect, optimize, scenario, subset, brute-force

  std::string db = "materials_table1";
  std::string truss = "midcant6";
  std::string model;    // trained model file (every command but train)
  std::string out_dir;  // empty: $TRUSSMAT_OUT_DIR, then kDefaultOutDir
  std::uint64_t seed = 0;

  TrainConfig train;  // its seed is overwritten by `seed`

  std::optional<double> cost_limit;
  std::optional<double> mass_limit;
  double safety_factor = 4.0;
  double area_min = 1e-9;
  double area_max = 1e-2;
  double tol = 1e-3;
  int p = 6;
  double t0 = 3.0;
  double mu = 1.01;
  double design_lr = 2e-3;
  int max_iters = 2000;
  double eps_star = 1e-6;

  double fixed_area = 2e-3;          // scenario and brute-force
  std::vector<std::string> classes;  // subset
  std::string attribute = "E";       // inspect grid
  int resolution = 61;               // inspect grid
};

/// Command, seed, input paths and every setting that affects numbers, plus
/// the FNV-1a hash of that configuration.
nlohmann::json make_manifest(const Options& opts);
/// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

/// --out, else $TRUSSMAT_OUT_DIR, else kDefaultOutDir.
std::filesystem::path resolve_out_dir(const Options& opts);

/// Runs one command. Progress and reports go to `out`, diagnostics to `err`.
/// Never throws.
ExitCode run_command(const Options& opts, std::ostream& out, std::ostream& err);

}  // namespace trussmat

#endif  // TRUSSMAT_COMMANDS_HPP
