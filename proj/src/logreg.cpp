#include "cfglearn/logreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "cfglearn/error.hpp"
#include "cfglearn/random.hpp"

namespace cfglearn {

namespace {

// Keeps sigmoid inside the open interval (0,1) even where exp under/overflows.
constexpr double kSigmoidFloor = std::numeric_limits<double>::denorm_min();
constexpr double kSigmoidCeil = 1.0 - 0x1.0p-53;

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
  return acc;
}

void check_shapes(const LinearModel& model, const Matrix& X, std::span<const double> y) {
  if (X.cols() != model.input_dim())
    throw DimensionError(fmt::format("model expects {} inputs, data has {} columns",
                                     model.input_dim(), X.cols()));
  if (X.rows() != y.size())
    throw DimensionError(fmt::format("{} input rows but {} targets", X.rows(), y.size()));
}

double penalised_objective(const LinearModel& m, const Matrix& X, std::span<const double> y,
                           double l2) {
  double ll = log_likelihood(m, X, y);
  if (l2 > 0.0) ll -= 0.5 * l2 * dot(m.w, m.w);
  return ll;
}

bool all_finite(const LinearModel& m) {
  return std::isfinite(m.b) &&
         std::all_of(m.w.begin(), m.w.end(), [](double v) { return std::isfinite(v); });
}

struct Validation {
  const Matrix* X = nullptr;
  std::vector<double> y;
};

TrainReport fit(const Matrix& X, std::span<const double> y, const TrainConfig& cfg,
                const Validation& validation) {
  const std::size_t n = X.rows(), m = X.cols();

  Rng init_rng(derive_seed(cfg.seed, {1}));
  Rng shuffle_rng(derive_seed(cfg.seed, {2}));

  LinearModel model{std::vector<double>(m), 0.0};
  for (double& wj : model.w) wj = uniform(init_rng, -cfg.weight_init_scale, cfg.weight_init_scale);

  TrainReport report;
  report.initial_objective = penalised_objective(model, X, y, cfg.l2_penalty);
  if (!std::isfinite(report.initial_objective))
    throw DivergenceError("initial objective is not finite");

  LinearModel best = model;
  double best_objective = report.initial_objective;
  double best_validation = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad_w(m);
  const double decay = cfg.l2_penalty / static_cast<double>(n);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      double grad_b = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        auto x = X.row(order[k]);
        const double residual = y[order[k]] - sigmoid(dot(model.w, x) + model.b);
        for (std::size_t j = 0; j < m; ++j) grad_w[j] += residual * x[j];
        grad_b += residual;
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t j = 0; j < m; ++j)
        model.w[j] += cfg.learning_rate * (grad_w[j] * inv - decay * model.w[j]);
      model.b += cfg.learning_rate * grad_b * inv;
    }

    report.epochs_run = epoch;
    const double objective = penalised_objective(model, X, y, cfg.l2_penalty);
    if (!std::isfinite(objective) || !all_finite(model))
      throw DivergenceError(fmt::format(
          "training diverged at epoch {} (learning rate {} too large?)", epoch,
          cfg.learning_rate));
    if (objective > best_objective) {
      best_objective = objective;
      best = model;
      report.best_epoch = epoch;
    }

    if (validation.X != nullptr && cfg.patience > 0) {
      const double vloss = mean_cross_entropy(model, *validation.X, validation.y);
      if (vloss < best_validation) {
        best_validation = vloss;
        since_improvement = 0;
      } else if (++since_improvement >= cfg.patience) {
        report.stopped_early = true;
        break;
      }
    }
  }

  report.model = std::move(best);
  report.final_objective = best_objective;
  report.train_loss = mean_cross_entropy(report.model, X, y);
  if (validation.X != nullptr && validation.X->rows() > 0)
    report.validation_loss = mean_cross_entropy(report.model, *validation.X, validation.y);
  return report;
}

}  // namespace

double sigmoid(double z) noexcept {
  double s;
  if (z >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kSigmoidFloor, kSigmoidCeil);
}

double softplus(double z) noexcept {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double score(const LinearModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim())
    throw DimensionError(
        fmt::format("model expects {} inputs, got {}", model.input_dim(), x.size()));
  return dot(model.w, x) + model.b;
}

double predict(const LinearModel& model, std::span<const double> x) {
  return sigmoid(score(model, x));
}

void TrainingSet::validate() const {
  if (X.rows() == 0) throw DataError("training set is empty");
  if (X.rows() != Y.rows())
    throw DataError(fmt::format("{} input rows but {} target rows", X.rows(), Y.rows()));
  if (Y.cols() == 0) throw DataError("training set has no target columns");
  for (std::size_t i = 0; i < Y.rows(); ++i)
    for (double v : Y.row(i))
      if (!(v >= 0.0 && v <= 1.0))
        throw DataError(fmt::format("target {} outside [0,1] in row {}", v, i));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ArgumentError("learning_rate must be positive");
  if (epochs == 0) throw ArgumentError("epochs must be positive");
  if (batch_size == 0) throw ArgumentError("batch_size must be positive");
  if (!(weight_init_scale >= 0.0)) throw ArgumentError("weight_init_scale must be nonnegative");
  if (!(l2_penalty >= 0.0)) throw ArgumentError("l2_penalty must be nonnegative");
}

double log_likelihood(const LinearModel& model, const Matrix& X, std::span<const double> y) {
  check_shapes(model, X, y);
  double total = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const double z = dot(model.w, X.row(i)) + model.b;
    const double yi = y[i];
    if (yi != 0.0) total += yi * log_sigmoid(z);
    if (yi != 1.0) total += (1.0 - yi) * log_sigmoid(-z);
  }
  return total;
}

double log_likelihood(const MultiOutputModel& model, const Matrix& X, const Matrix& Y) {
  if (Y.cols() != model.output_dim())
    throw DimensionError(fmt::format("model has {} outputs, targets have {} columns",
                                     model.output_dim(), Y.cols()));
  double total = 0.0;
  for (std::size_t h = 0; h < model.output_dim(); ++h)
    total += log_likelihood(model.outputs[h], X, Y.column(h));
  return total;
}

Gradient gradient(const LinearModel& model, const Matrix& X, std::span<const double> y) {
  check_shapes(model, X, y);
  Gradient g{std::vector<double>(model.input_dim(), 0.0), 0.0};
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto x = X.row(i);
    const double residual = y[i] - sigmoid(dot(model.w, x) + model.b);
    for (std::size_t j = 0; j < x.size(); ++j) g.w[j] += residual * x[j];
    g.b += residual;
  }
  return g;
}

double mean_cross_entropy(const LinearModel& model, const Matrix& X, std::span<const double> y) {
  if (X.rows() == 0) return 0.0;
  return -log_likelihood(model, X, y) / static_cast<double>(X.rows());
}

TrainReport train_with_report(const TrainingSet& ts, const TrainConfig& cfg,
                              const TrainingSet* validation) {
  ts.validate();
  cfg.validate();
  if (ts.Y.cols() != 1)
    throw ArgumentError(fmt::format(
        "single-output training needs one target column, got {}; use train_multi", ts.Y.cols()));
  Validation v;
  if (validation != nullptr && validation->X.rows() > 0) {
    if (validation->X.cols() != ts.X.cols() || validation->Y.cols() != 1)
      throw DimensionError("validation set shape does not match training set");
    v.X = &validation->X;
    v.y = validation->Y.column(0);
  }
  return fit(ts.X, ts.Y.column(0), cfg, v);
}

LinearModel train(const TrainingSet& ts, const TrainConfig& cfg) {
  return train_with_report(ts, cfg).model;
}

std::uint64_t derive_output_seed(std::uint64_t seed, std::size_t h) noexcept {
  return seed + static_cast<std::uint64_t>(h) * 0x9E3779B97F4A7C15ULL;
}

std::vector<TrainReport> train_multi_with_report(const TrainingSet& ts, const TrainConfig& cfg,
                                                 const TrainingSet* validation, SeedRule rule) {
  ts.validate();
  cfg.validate();
  const bool has_validation = validation != nullptr && validation->X.rows() > 0;
  if (has_validation &&
      (validation->X.cols() != ts.X.cols() || validation->Y.cols() != ts.Y.cols()))
    throw DimensionError("validation set shape does not match training set");

  std::vector<TrainReport> reports;
  reports.reserve(ts.Y.cols());
  for (std::size_t h = 0; h < ts.Y.cols(); ++h) {
    TrainConfig sub = cfg;
    if (rule == SeedRule::per_output) sub.seed = derive_output_seed(cfg.seed, h);
    Validation v;
    if (has_validation) {
      v.X = &validation->X;
      v.y = validation->Y.column(h);
    }
    reports.push_back(fit(ts.X, ts.Y.column(h), sub, v));
  }
  return reports;
}

MultiOutputModel train_multi(const TrainingSet& ts, const TrainConfig& cfg, SeedRule rule) {
  MultiOutputModel out;
  for (auto& r : train_multi_with_report(ts, cfg, nullptr, rule))
    out.outputs.push_back(std::move(r.model));
  return out;
}

FeatureScaling FeatureScaling::fit(const Matrix& X) {
  const std::size_t m = X.cols();
  FeatureScaling s{std::vector<double>(m, 0.0), std::vector<double>(m, 1.0)};
  if (X.rows() == 0) return s;
  const double n = static_cast<double>(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) s.mean[j] += X(i, j);
  for (double& v : s.mean) v /= n;
  std::vector<double> var(m, 0.0);
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = X(i, j) - s.mean[j];
      var[j] += d * d;
    }
  for (std::size_t j = 0; j < m; ++j) {
    const double sd = std::sqrt(var[j] / n);
    s.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

FeatureScaling FeatureScaling::identity(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

Matrix FeatureScaling::apply(const Matrix& X) const {
  if (X.cols() != mean.size()) throw DimensionError("scaling width does not match data");
  Matrix out = X;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = (X(i, j) - mean[j]) / scale[j];
  return out;
}

LinearModel FeatureScaling::unscale(const LinearModel& model) const {
  if (model.input_dim() != mean.size()) throw DimensionError("scaling width does not match model");
  LinearModel raw{std::vector<double>(model.input_dim()), model.b};
  for (std::size_t j = 0; j < model.input_dim(); ++j) {
    raw.w[j] = model.w[j] / scale[j];
    raw.b -= raw.w[j] * mean[j];
  }
  return raw;
}

}  // namespace cfglearn
