#pragma once

// Logistic regression trained by mini-batch stochastic gradient ascent on the
// log-likelihood
//
//   L(w, b) = sum_i [ y_i ln s(w.x_i + b) + (1 - y_i) ln(1 - s(w.x_i + b)) ]
//
// with fractional targets y_i in [0,1] allowed. Multi-output models are k
// independent single-output problems over the same inputs.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cfglearn/matrix.hpp"

namespace cfglearn {

/// Logistic function; stable for any finite z.
double sigmoid(double z) noexcept;
/// ln(1 + e^z) without overflow.
double softplus(double z) noexcept;
/// ln sigmoid(z) = -softplus(-z).
inline double log_sigmoid(double z) noexcept { return -softplus(-z); }

struct LinearModel {
  std::vector<double> w;
  double b = 0.0;

  std::size_t input_dim() const noexcept { return w.size(); }
  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct MultiOutputModel {
  std::vector<LinearModel> outputs;

  std::size_t output_dim() const noexcept { return outputs.size(); }
  std::size_t input_dim() const noexcept { return outputs.empty() ? 0 : outputs[0].input_dim(); }
  friend bool operator==(const MultiOutputModel&, const MultiOutputModel&) = default;
};

/// w.x + b. Throws DimensionError on mismatch.
double score(const LinearModel& model, std::span<const double> x);
/// sigmoid(w.x + b).
double predict(const LinearModel& model, std::span<const double> x);

/// X: n x m inputs, Y: n x k targets in [0,1].
struct TrainingSet {
  Matrix X;
  Matrix Y;

  /// Throws DataError unless n >= 1, rows agree and all targets are in [0,1].
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double weight_init_scale = 0.1;
  double l2_penalty = 0.0;
  /// Stop after this many epochs without validation-loss improvement; 0 disables.
  std::size_t patience = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

double log_likelihood(const LinearModel& model, const Matrix& X, std::span<const double> y);
/// Sum of per-output log-likelihoods; output h is scored against column h of Y.
double log_likelihood(const MultiOutputModel& model, const Matrix& X, const Matrix& Y);

struct Gradient {
  std::vector<double> w;
  double b = 0.0;
};

/// Gradient of log_likelihood: sum_i (y_i - s(z_i)) (x_i, 1).
Gradient gradient(const LinearModel& model, const Matrix& X, std::span<const double> y);

struct TrainReport {
  LinearModel model;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  /// Mean binary cross-entropy of the returned model.
  double train_loss = 0.0;
  std::optional<double> validation_loss;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 0 means the initial model was kept
  bool stopped_early = false;
};

/// Single-output training (Y must have one column). Deterministic in cfg.seed.
/// The returned model is the iterate with the best penalised training
/// objective, so it never scores below the initial model. Throws
/// DivergenceError on a non-finite objective.
LinearModel train(const TrainingSet& ts, const TrainConfig& cfg);

/// As train(), with an optional validation set that drives early stopping.
TrainReport train_with_report(const TrainingSet& ts, const TrainConfig& cfg,
                              const TrainingSet* validation = nullptr);

enum class SeedRule {
  per_output,  // output h uses derive_output_seed(cfg.seed, h)
  shared,      // every output uses cfg.seed
};

/// Seed of output h; output 0 keeps the base seed.
std::uint64_t derive_output_seed(std::uint64_t seed, std::size_t h) noexcept;

MultiOutputModel train_multi(const TrainingSet& ts, const TrainConfig& cfg,
                             SeedRule rule = SeedRule::per_output);
std::vector<TrainReport> train_multi_with_report(const TrainingSet& ts, const TrainConfig& cfg,
                                                 const TrainingSet* validation = nullptr,
                                                 SeedRule rule = SeedRule::per_output);

/// Mean binary cross-entropy (negative mean log-likelihood).
double mean_cross_entropy(const LinearModel& model, const Matrix& X, std::span<const double> y);

/// Per-column affine standardisation x' = (x - mean) / scale.
struct FeatureScaling {
  std::vector<double> mean;
  std::vector<double> scale;

  /// Columns with zero spread keep scale 1.
  static FeatureScaling fit(const Matrix& X);
  static FeatureScaling identity(std::size_t dim);
  Matrix apply(const Matrix& X) const;
  /// Model over raw inputs equivalent to `model` over scaled inputs.
  LinearModel unscale(const LinearModel& model) const;

  friend bool operator==(const FeatureScaling&, const FeatureScaling&) = default;
};

}  // namespace cfglearn
