#include "trussmat/vae.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>

#include "trussmat/errors.hpp"

namespace trussmat {

using nlohmann::json;
using ad::Var;

void TrainConfig::validate() const {
  if (!(beta > 0.0)) throw ContractError("train: beta must be > 0");
  if (!(lr > 0.0)) throw ContractError("train: lr must be > 0");
  if (epochs < 1) throw ContractError("train: epochs must be >= 1");
  if (hidden < 1) throw ContractError("train: hidden width must be >= 1");
}

// ---------------------------------------------------------------------------
// Model evaluation

Eigen::MatrixX2d VaeModel::encode_rows(const Eigen::MatrixX4d& props) const {
  Eigen::MatrixXd scaled(props.rows(), 4);
  for (Eigen::Index i = 0; i < props.rows(); ++i) {
    scaled.row(i) = scaler.scale(props.row(i).transpose()).transpose();
  }
  const Eigen::MatrixXd h = nn::apply(weights.encoder_hidden, scaled).cwiseMax(0.0);
  return nn::apply(weights.encoder_mean, h);
}

Latent VaeModel::encode(const Properties& zeta) const {
  Eigen::MatrixX4d row(1, 4);
  row.row(0) = zeta.transpose();
  return encode_rows(row).row(0).transpose();
}

Properties VaeModel::decode_scaled(const Latent& z) const {
  const Eigen::MatrixXd h =
      nn::apply(weights.decoder_hidden, z.transpose()).cwiseMax(0.0);
  const Eigen::MatrixXd logits = nn::apply(weights.decoder_output, h);
  return (1.0 / (1.0 + (-logits.array()).exp())).matrix().transpose();
}

Properties VaeModel::decode(const Latent& z) const {
  return scaler.unscale(decode_scaled(z));
}

Var VaeModel::decode(ad::Tape& tape, const Var& z) const {
  if (z.rows() != 1 || z.cols() != 2) {
    throw ShapeError("decode: latent input must be (1x2)");
  }
  const nn::BoundDense hidden_layer = nn::bind(tape, weights.decoder_hidden, false);
  const nn::BoundDense output_layer = nn::bind(tape, weights.decoder_output, false);
  const Var s = ad::sigmoid(output_layer(ad::relu(hidden_layer(z))));
  const Var range = tape.constant(scaler.range().transpose());
  const Var lo = tape.constant(scaler.min.transpose());
  return ad::mul(s, range) + lo;
}

void VaeModel::check_matches(const MaterialDatabase& db) const {
  if (names.size() != db.size()) {
    throw InputError("model was trained on " + std::to_string(names.size()) +
                     " materials but the database has " +
                     std::to_string(db.size()));
  }
  for (std::size_t i = 0; i < db.size(); ++i) {
    if (names[i] != db[i].name) {
      throw InputError("model/database mismatch at row " + std::to_string(i + 1) +
                       ": model has '" + names[i] + "', database has '" +
                       db[i].name + "'");
    }
  }
  const auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
  };
  for (int a = 0; a < 4; ++a) {
    if (!close(scaler.min(a), db.scaler().min(a)) ||
        !close(scaler.max(a), db.scaler().max(a))) {
      throw InputError(std::string("model/database scaler mismatch for attribute ") +
                       attribute_label(a));
    }
  }
}

// ---------------------------------------------------------------------------
// Training

Var kl_divergence(const Var& mean, const Var& logvar) {
  const double rows = static_cast<double>(mean.rows());
  const Var terms = ad::mul(mean, mean) + ad::exp(logvar) - logvar - 1.0;
  return (0.5 / rows) * ad::sum(terms);
}

TrainResult train(const MaterialDatabase& db, const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Eigen::Index h = cfg.hidden;

  TrainResult result;
  VaeWeights& w = result.model.weights;
  w.encoder_hidden = nn::glorot_dense(4, h, rng);
  w.encoder_mean = nn::glorot_dense(h, 2, rng);
  w.encoder_logvar = nn::glorot_dense(h, 2, rng);
  w.decoder_hidden = nn::glorot_dense(2, h, rng);
  w.decoder_output = nn::glorot_dense(h, 4, rng);

  const Eigen::MatrixXd x = db.scaled_matrix();
  const Eigen::Index n = x.rows();
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Adam adam(cfg.lr);
  result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));

  std::vector<nn::Matrix*> params;
  for (nn::Dense* layer : {&w.encoder_hidden, &w.encoder_mean, &w.encoder_logvar,
                           &w.decoder_hidden, &w.decoder_output}) {
    params.push_back(&layer->weight);
    params.push_back(&layer->bias);
  }

  Eigen::MatrixXd noise(n, 2);
  std::vector<nn::Matrix> grads(params.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) noise(i, j) = normal(rng);
    }

    ad::Tape tape;
    const nn::BoundDense enc_h = nn::bind(tape, w.encoder_hidden, true);
    const nn::BoundDense enc_mu = nn::bind(tape, w.encoder_mean, true);
    const nn::BoundDense enc_lv = nn::bind(tape, w.encoder_logvar, true);
    const nn::BoundDense dec_h = nn::bind(tape, w.decoder_hidden, true);
    const nn::BoundDense dec_out = nn::bind(tape, w.decoder_output, true);

    const Var input = tape.constant(x);
    const Var hidden = ad::relu(enc_h(input));
    const Var mu = enc_mu(hidden);
    const Var logvar = enc_lv(hidden);
    const Var sigma = ad::exp(0.5 * logvar);
    const Var z = mu + ad::mul(sigma, tape.constant(noise));
    const Var recon = ad::sigmoid(dec_out(ad::relu(dec_h(z))));
    const Var diff = recon - input;
    const Var loss = ad::mean(ad::mul(diff, diff)) + cfg.beta * kl_divergence(mu, logvar);

    const double value = loss.scalar();
    if (!std::isfinite(value)) {
      throw DivergenceError("VAE training diverged: non-finite loss at epoch " +
                                std::to_string(epoch),
                            static_cast<std::size_t>(epoch));
    }
    result.loss_history.push_back(value);

    tape.backward(loss);
    std::size_t k = 0;
    for (const nn::BoundDense* layer : {&enc_h, &enc_mu, &enc_lv, &dec_h, &dec_out}) {
      grads[k++] = tape.grad(layer->weight);
      grads[k++] = tape.grad(layer->bias);
    }
    adam.step(params, grads);
  }

  VaeModel& model = result.model;
  model.scaler = db.scaler();
  for (const Material& m : db.materials()) {
    model.names.push_back(m.name);
    model.classes.push_back(m.cls);
  }
  model.embeddings = model.encode_rows(db.property_matrix());
  return result;
}

// ---------------------------------------------------------------------------
// Reports

ReconstructionReport reconstruction_report(const VaeModel& model,
                                           const MaterialDatabase& db) {
  ReconstructionReport report;
  report.percent_error.resize(db.size(), 4);
  const Eigen::MatrixX2d z = model.encode_rows(db.property_matrix());
  for (std::size_t i = 0; i < db.size(); ++i) {
    const Properties truth = db[i].properties();
    const Properties decoded = model.decode(z.row(i).transpose());
    report.names.push_back(db[i].name);
    report.percent_error.row(i) =
        ((truth - decoded).cwiseAbs().array() / truth.array() * 100.0).transpose();
  }
  report.max_error = report.percent_error.colwise().maxCoeff().transpose();
  return report;
}

Eigen::MatrixXd distance_matrix(const VaeModel& model, const MaterialDatabase& db) {
  const Eigen::MatrixX2d z = model.encode_rows(db.property_matrix());
  const Eigen::Index n = z.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = (z.row(i) - z.row(j)).norm();
      d(j, i) = d(i, j);
    }
  }
  return d;
}

ClassSeparation class_separation(const Eigen::MatrixXd& distances,
                                 const MaterialDatabase& db) {
  double intra = 0.0, inter = 0.0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < db.size(); ++i) {
    for (std::size_t j = i + 1; j < db.size(); ++j) {
      if (db[i].cls == db[j].cls) {
        intra += distances(i, j);
        ++n_intra;
      } else {
        inter += distances(i, j);
        ++n_inter;
      }
    }
  }
  return {n_intra ? intra / n_intra : 0.0, n_inter ? inter / n_inter : 0.0};
}

double mean_class_distance(const Eigen::MatrixXd& distances,
                           const MaterialDatabase& db, const std::string& a,
                           const std::string& b) {
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < db.size(); ++i) {
    for (std::size_t j = 0; j < db.size(); ++j) {
      if (i == j || db[i].cls != a || db[j].cls != b) continue;
      total += distances(i, j);
      ++count;
    }
  }
  if (count == 0) {
    throw ContractError("mean_class_distance: no pairs for classes '" + a +
                        "' and '" + b + "'");
  }
  return total / count;
}

LatentGrid latent_grid(const VaeModel& model, int attribute, int resolution) {
  if (resolution < 2) throw ContractError("latent_grid: resolution must be >= 2");
  if (attribute < 0 || attribute > 3) throw ContractError("latent_grid: bad attribute");
  LatentGrid grid;
  grid.attribute = attribute;
  grid.axis = Eigen::VectorXd::LinSpaced(resolution, -3.0, 3.0);
  grid.values.resize(resolution, resolution);
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      grid.values(i, j) = model.decode(Latent(grid.axis(j), grid.axis(i)))(attribute);
    }
  }
  return grid;
}

LatentGrid latent_grid(const VaeModel& model, const std::string& attribute,
                       int resolution) {
  return latent_grid(model, parse_attribute(attribute), resolution);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json dense_to_json(const nn::Dense& layer) {
  json j;
  j["inputs"] = layer.inputs();
  j["outputs"] = layer.outputs();
  std::vector<double> weight;
  for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
    for (Eigen::Index k = 0; k < layer.weight.cols(); ++k) {
      weight.push_back(layer.weight(i, k));
    }
  }
  j["weight"] = weight;
  std::vector<double> bias(layer.bias.data(), layer.bias.data() + layer.bias.size());
  j["bias"] = bias;
  return j;
}

nn::Dense dense_from_json(const json& j, const std::string& name,
                          Eigen::Index inputs, Eigen::Index outputs) {
  const auto in = j.at("inputs").get<Eigen::Index>();
  const auto out = j.at("outputs").get<Eigen::Index>();
  if (in != inputs || out != outputs) {
    throw InputError("model layer '" + name + "' has shape " + std::to_string(in) +
                     "x" + std::to_string(out) + ", expected " +
                     std::to_string(inputs) + "x" + std::to_string(outputs));
  }
  const auto weight = j.at("weight").get<std::vector<double>>();
  const auto bias = j.at("bias").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(weight.size()) != in * out ||
      static_cast<Eigen::Index>(bias.size()) != out) {
    throw InputError("model layer '" + name + "' has " +
                     std::to_string(weight.size()) + " weights and " +
                     std::to_string(bias.size()) + " biases, expected " +
                     std::to_string(in * out) + " and " + std::to_string(out));
  }
  nn::Dense layer;
  layer.weight.resize(in, out);
  for (Eigen::Index i = 0; i < in; ++i) {
    for (Eigen::Index k = 0; k < out; ++k) layer.weight(i, k) = weight[i * out + k];
  }
  layer.bias = Eigen::Map<const Eigen::MatrixXd>(bias.data(), 1, out);
  return layer;
}

}  // namespace

json model_to_json(const VaeModel& model, const json& extra) {
  json j;
  j["format"] = "trussmat-vae";
  j["version"] = kModelFormatVersion;
  j["input_dim"] = 4;
  j["latent_dim"] = 2;
  j["hidden"] = model.hidden();
  j["layers"] = {
      {"encoder_hidden", dense_to_json(model.weights.encoder_hidden)},
      {"encoder_mean", dense_to_json(model.weights.encoder_mean)},
      {"encoder_logvar", dense_to_json(model.weights.encoder_logvar)},
      {"decoder_hidden", dense_to_json(model.weights.decoder_hidden)},
      {"decoder_output", dense_to_json(model.weights.decoder_output)},
  };
  j["scaler"] = {
      {"min", std::vector<double>(model.scaler.min.data(), model.scaler.min.data() + 4)},
      {"max", std::vector<double>(model.scaler.max.data(), model.scaler.max.data() + 4)},
  };
  json mats = json::array();
  for (std::size_t i = 0; i < model.names.size(); ++i) {
    mats.push_back({{"name", model.names[i]},
                    {"class", model.classes[i]},
                    {"z", {model.embeddings(i, 0), model.embeddings(i, 1)}}});
  }
  j["materials"] = mats;
  if (!extra.is_null()) j["manifest"] = extra;
  return j;
}

VaeModel model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "trussmat-vae") {
      throw InputError("not a trussmat VAE model file");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw InputError("unsupported model format version " + std::to_string(version));
    }
    if (j.at("input_dim").get<int>() != 4 || j.at("latent_dim").get<int>() != 2) {
      throw InputError("model must have input_dim 4 and latent_dim 2");
    }
    const auto h = j.at("hidden").get<Eigen::Index>();
    if (h < 1) throw InputError("model hidden width must be >= 1");
    const json& layers = j.at("layers");

    VaeModel model;
    model.weights.encoder_hidden =
        dense_from_json(layers.at("encoder_hidden"), "encoder_hidden", 4, h);
    model.weights.encoder_mean =
        dense_from_json(layers.at("encoder_mean"), "encoder_mean", h, 2);
    model.weights.encoder_logvar =
        dense_from_json(layers.at("encoder_logvar"), "encoder_logvar", h, 2);
    model.weights.decoder_hidden =
        dense_from_json(layers.at("decoder_hidden"), "decoder_hidden", 2, h);
    model.weights.decoder_output =
        dense_from_json(layers.at("decoder_output"), "decoder_output", h, 4);

    const auto lo = j.at("scaler").at("min").get<std::vector<double>>();
    const auto hi = j.at("scaler").at("max").get<std::vector<double>>();
    if (lo.size() != 4 || hi.size() != 4) throw InputError("scaler must have 4 entries");
    model.scaler.min = Eigen::Map<const Properties>(lo.data());
    model.scaler.max = Eigen::Map<const Properties>(hi.data());

    const json& mats = j.at("materials");
    model.embeddings.resize(static_cast<Eigen::Index>(mats.size()), 2);
    for (std::size_t i = 0; i < mats.size(); ++i) {
      const auto z = mats[i].at("z").get<std::vector<double>>();
      if (z.size() != 2) throw InputError("embedding must have 2 coordinates");
      model.names.push_back(mats[i].at("name").get<std::string>());
      model.classes.push_back(mats[i].at("class").get<std::string>());
      model.embeddings(static_cast<Eigen::Index>(i), 0) = z[0];
      model.embeddings(static_cast<Eigen::Index>(i), 1) = z[1];
    }
    return model;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::string& path, const VaeModel& model, const json& extra) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file '" + path + "'");
  out << model_to_json(model, extra).dump(1) << "\n";
}

VaeModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Exports

void write_loss_history(std::ostream& out, const std::vector<double>& history) {
  out << "epoch,loss\n" << std::setprecision(12);
  for (std::size_t i = 0; i < history.size(); ++i) out << i << "," << history[i] << "\n";
}

void write_latent_scatter(std::ostream& out, const VaeModel& model,
                          const MaterialDatabase& db) {
  const Eigen::MatrixX2d z = model.encode_rows(db.property_matrix());
  out << "name,class,z0,z1\n" << std::setprecision(12);
  for (std::size_t i = 0; i < db.size(); ++i) {
    out << db[i].name << "," << db[i].cls << "," << z(i, 0) << "," << z(i, 1) << "\n";
  }
}

void write_distance_matrix(std::ostream& out, const Eigen::MatrixXd& d,
                           const MaterialDatabase& db) {
  out << "name";
  for (const Material& m : db.materials()) out << "," << m.name;
  out << "\n" << std::setprecision(12);
  for (std::size_t i = 0; i < db.size(); ++i) {
    out << db[i].name;
    for (std::size_t j = 0; j < db.size(); ++j) out << "," << d(i, j);
    out << "\n";
  }
}

void write_latent_grid(std::ostream& out, const LatentGrid& grid) {
  out << "z0,z1," << attribute_label(grid.attribute) << "\n" << std::setprecision(12);
  for (Eigen::Index i = 0; i < grid.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.values.cols(); ++j) {
      out << grid.axis(j) << "," << grid.axis(i) << "," << grid.values(i, j) << "\n";
    }
  }
}

void write_reconstruction_report(std::ostream& out,
                                 const ReconstructionReport& report) {
  out << "material,dE_pct,dC_pct,drho_pct,dY_pct\n" << std::fixed << std::setprecision(3);
  for (std::size_t i = 0; i < report.names.size(); ++i) {
    out << report.names[i];
    for (int a = 0; a < 4; ++a) out << "," << report.percent_error(i, a);
    out << "\n";
  }
  out << "max";
  for (int a = 0; a < 4; ++a) out << "," << report.max_error(a);
  out << "\n";
  out.unsetf(std::ios::floatfield);
}

}  // namespace trussmat
