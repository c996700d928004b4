#pragma once

#include "rdlt/entropy_model.hpp"
#include "rdlt/random.hpp"
#include "rdlt/transforms.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rdlt {

struct TrainConfig {
  int n = 8;
  /// Dimensionless RD weights; phase 1 uses lambda_lo, phase 2 samples [lambda_lo, lambda_hi].
  double lambda_lo = 0.01;
  double lambda_hi = 0.5;
  /// Converts a dimensionless lambda into the pixel-MSE-per-bpp weight applied to the rate term.
  double lambda_scale = 1300.0;
  std::int64_t phase1_steps = 20000;
  std::int64_t phase2_steps = 80000;
  int batch_size = 256;
  /// Step size for the transform matrix.
  double learning_rate = 1e-4;
  /// Step size for the entropy parameters and the lambda-to-step network.
  double aux_learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  std::int64_t orthonormalize_every = 1000;
  double orth_penalty_weight = 0.0;
  /// Restrict the transform update to the tangent space of the orthogonal group.
  bool tangent_gradient = true;
  int qnet_hidden = 16;
  /// Step the network predicts before training.
  double initial_step = 20.0;

  std::int64_t total_steps() const { return phase1_steps + phase2_steps; }
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Two affine layers with a tanh between them, mapping log(lambda) to a step size:
/// Q = softplus(w2 . tanh(w1 log(lambda) + b1) + b2) + 1.
struct LambdaToQNet {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;

  static LambdaToQNet zeros(int hidden);
  /// Small random weights with b2 chosen so every lambda in [lambda_lo, lambda_hi] initially
  /// maps to about `step`.
  static LambdaToQNet initial(int hidden, double step, double lambda_lo, double lambda_hi, Rng& rng);

  int hidden() const { return static_cast<int>(w1.size()); }
  std::size_t parameter_count() const { return 3 * w1.size() + 1; }
  /// Flattened view order: w1, b1, w2, b2.
  double& parameter(std::size_t k);
  double parameter(std::size_t k) const;

  void serialize(ByteWriter& out) const;
  static LambdaToQNet deserialize(ByteReader& in);
};

double qnet_forward(const LambdaToQNet& net, double lambda);

struct RdObjective {
  double lambda = 0.01;
  double lambda_scale = 1.0;
  double orth_penalty_weight = 0.0;
  /// Bypasses the network (its gradients are then zero).
  std::optional<double> fixed_step;
};

struct RdTerms {
  double loss = 0.0;
  /// Mean squared error per sample.
  double distortion = 0.0;
  /// Estimated bits per pixel.
  double rate = 0.0;
  double step = 0.0;
};

/// loss = D + lambda * lambda_scale * R + orth_penalty_weight * defect^2 for one batch
/// (rows of `batch`), with the additive noise proxy `noise` (same shape, entries in [-1/2, 1/2)).
RdTerms rd_loss(const Matrix& transform, const EntropyModelParams& params, const LambdaToQNet& qnet,
                const Matrix& batch, const Matrix& noise, const RdObjective& objective);

struct RdGradients {
  Matrix d_transform;
  std::vector<double> d_mu;
  std::vector<double> d_log_sigma;
  LambdaToQNet d_qnet;
  RdTerms terms;
};

/// Reverse-mode gradients of rd_loss with respect to every trainable parameter.
RdGradients gradients(const Matrix& transform, const EntropyModelParams& params, const LambdaToQNet& qnet,
                      const Matrix& batch, const Matrix& noise, const RdObjective& objective);

struct TrainLogRow {
  std::int64_t step = 0;
  RdTerms terms;
  double defect = 0.0;
};

struct TrainedModel {
  TransformMatrix transform;
  EntropyModelParams entropy;
  LambdaToQNet qnet;
  TrainConfig config;
  std::string data_hash;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// Defect measured just before each projection (the last entry is the export projection).
  std::vector<double> defect_history;

  nlohmann::json metadata() const;
};

struct TrainOptions {
  /// Called every `log_every` steps (0 disables) with the batch terms of that step.
  std::int64_t log_every = 0;
  std::function<void(const TrainLogRow&)> on_log;
  /// Hashed into the model metadata; defaults to a hash of the training blocks.
  std::string data_hash;
};

TrainedModel train(const BlockSet& blocks, const TrainConfig& config, const TrainOptions& options = {});

inline constexpr char kModelMagic[] = "RDLM";
inline constexpr std::uint16_t kModelVersion = 1;

std::vector<std::uint8_t> encode_model_file(const TrainedModel& model);
TrainedModel decode_model_file(std::span<const std::uint8_t> bytes, const std::string& context);
void write_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel read_model(const std::filesystem::path& path);

} // namespace rdlt
