#ifndef TRUSSMAT_VAE_HPP
#define TRUSSMAT_VAE_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trussmat/autodiff.hpp"
#include "trussmat/materials.hpp"
#include "trussmat/nn.hpp"

namespace trussmat {

using Latent = Eigen::Vector2d;

struct TrainConfig {
  double beta = 5e-5;    // KL weight
  double lr = 0.002;     // Adam step size
  int epochs = 50000;
  std::uint64_t seed = 0;
  int hidden = 250;      // width of the single hidden layer in each coder

  /// Throws ContractError unless beta > 0, lr > 0, epochs >= 1, hidden >= 1.
  void validate() const;
};

struct VaeWeights {
  nn::Dense encoder_hidden;  // 4 -> hidden, relu
  nn::Dense encoder_mean;    // hidden -> 2
  nn::Dense encoder_logvar;  // hidden -> 2, log σ²
  nn::Dense decoder_hidden;  // 2 -> hidden, relu
  nn::Dense decoder_output;  // hidden -> 4, sigmoid
};

/// A trained variational autoencoder over (E, C, ρ, Y). The decoder maps a
/// latent point to properties in SI units via the stored scaler.
class VaeModel {
 public:
  VaeWeights weights;
  MinMaxScaler scaler;
  std::vector<std::string> names;    // training materials, in database order
  std::vector<std::string> classes;
  Eigen::MatrixX2d embeddings;       // encoder means, one row per material

  Eigen::Index hidden() const { return weights.encoder_hidden.outputs(); }

  /// Deterministic encoder mean of a property vector.
  Latent encode(const Properties& zeta) const;
  Latent encode(const Material& m) const { return encode(m.properties()); }
  /// Encoder means for a batch of property rows.
  Eigen::MatrixX2d encode_rows(const Eigen::MatrixX4d& props) const;

  /// Decoded properties in SI units.
  Properties decode(const Latent& z) const;
  /// Decoded properties in the unit box.
  Properties decode_scaled(const Latent& z) const;
  /// Decoder recorded on a tape: z is 1x2, result is 1x4 in SI units.
  /// Decoder weights enter as constants and never receive gradients.
  ad::Var decode(ad::Tape& tape, const ad::Var& z) const;

  /// Throws InputError when the model was not trained on `db`.
  void check_matches(const MaterialDatabase& db) const;
};

struct TrainResult {
  VaeModel model;
  std::vector<double> loss_history;  // one entry per epoch
};

/// Full-batch training with Adam, MSE reconstruction in scaled space and a
/// β-weighted diagonal-Gaussian KL term. Throws DivergenceError on a
/// non-finite loss.
TrainResult train(const MaterialDatabase& db, const TrainConfig& cfg);

/// Batch mean over rows of ½ Σ (μ² + σ² − 1 − ln σ²).
ad::Var kl_divergence(const ad::Var& mean, const ad::Var& logvar);

struct ReconstructionReport {
  std::vector<std::string> names;
  Eigen::MatrixX4d percent_error;  // |ζ − ζ̂| / ζ × 100
  Properties max_error;
};

ReconstructionReport reconstruction_report(const VaeModel& model,
                                           const MaterialDatabase& db);

/// Pairwise Euclidean distances between latent means of the database rows.
Eigen::MatrixXd distance_matrix(const VaeModel& model, const MaterialDatabase& db);

struct ClassSeparation {
  double intra_mean = 0.0;  // mean distance over same-class pairs
  double inter_mean = 0.0;  // mean distance over different-class pairs
};
ClassSeparation class_separation(const Eigen::MatrixXd& distances,
                                 const MaterialDatabase& db);
/// Mean latent distance between members of two classes.
double mean_class_distance(const Eigen::MatrixXd& distances,
                           const MaterialDatabase& db, const std::string& a,
                           const std::string& b);

struct LatentGrid {
  int attribute = kModulus;
  Eigen::VectorXd axis;    // shared by z0 and z1, spans [-3, 3]
  Eigen::MatrixXd values;  // values(i, j) at z0 = axis(j), z1 = axis(i)
};

/// Decoded attribute sampled on a resolution x resolution grid over [-3, 3]².
LatentGrid latent_grid(const VaeModel& model, int attribute, int resolution);
LatentGrid latent_grid(const VaeModel& model, const std::string& attribute,
                       int resolution);

// Persistence: versioned JSON text with layer dimensions, weights, scaler and
// embeddings. `extra` is stored verbatim under "manifest".
inline constexpr int kModelFormatVersion = 1;
nlohmann::json model_to_json(const VaeModel& model,
                             const nlohmann::json& extra = nullptr);
VaeModel model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const VaeModel& model,
                const nlohmann::json& extra = nullptr);
VaeModel load_model(const std::string& path);

// Plot-ready exports.
void write_loss_history(std::ostream& out, const std::vector<double>& history);
void write_latent_scatter(std::ostream& out, const VaeModel& model,
                          const MaterialDatabase& db);
void write_distance_matrix(std::ostream& out, const Eigen::MatrixXd& d,
                           const MaterialDatabase& db);
void write_latent_grid(std::ostream& out, const LatentGrid& grid);
void write_reconstruction_report(std::ostream& out,
                                 const ReconstructionReport& report);

}  // namespace trussmat

#endif  // TRUSSMAT_VAE_HPP
