#pragma once

// Experiment framework: split instances into in-sample / out-of-sample,
// learn a performance map on the in-sample rows, configure every
// out-of-sample instance through the configuration search, and score the
// chosen configuration against the default one by stored rho lookup.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfglearn/config_space.hpp"
#include "cfglearn/cssp.hpp"
#include "cfglearn/logreg.hpp"
#include "cfglearn/matrix.hpp"
#include "cfglearn/schema_file.hpp"

namespace cfglearn {

enum class Variant { pao, pai };

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view name);

struct Dataset {
  SchemaDocument schema;
  std::vector<std::string> instance_ids;  // ascending
  Matrix features;                        // one row per instance
  std::vector<std::string> config_ids;    // lexicographic setting order
  std::vector<Configuration> configs;
  /// Raw per-(instance, config) gap, +inf allowed; rows follow instance_ids.
  Matrix gaps;
  /// Rank-scaled performance, same layout as `gaps`.
  Matrix rho;
  std::size_t default_config = 0;
  double gamma = 1.0;
  std::uint64_t seed = 0;  // provenance of the data source

  std::size_t instance_count() const noexcept { return instance_ids.size(); }
  std::size_t config_count() const noexcept { return configs.size(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }
  std::size_t instance_index(std::string_view id) const;  // throws DataError
  std::size_t config_index(const Configuration& c) const;  // throws DataError
  /// Structural checks: shapes, ordering, rho range, default present.
  void validate() const;
};

/// Builds a dataset from raw gaps (instances x configs), ranking all pairs
/// jointly. Instances are sorted by id; `gaps` rows follow `instance_ids`.
Dataset make_dataset(SchemaDocument schema, std::vector<std::string> instance_ids,
                     Matrix features, std::vector<Configuration> configs, Matrix gaps,
                     std::size_t default_config, double gamma, std::uint64_t seed = 0);

struct InstanceSplit {
  std::vector<std::string> in_sample;      // sorted
  std::vector<std::string> out_of_sample;  // sorted
};

/// Uniform random subset of size n_out held out. Throws ArgumentError unless
/// 0 < n_out < ids.size().
InstanceSplit split_instances(std::span<const std::string> ids, std::size_t n_out,
                              std::uint64_t seed);

/// PaO rows: x = (f, c), y = rho. PaI rows: x = (f, rho), y = c.
/// Row order: instance ascending, then configuration order.
TrainingSet assemble_training(Variant variant, const Dataset& ds,
                              std::span<const std::string> in_sample);

struct RowSplit {
  std::vector<std::size_t> train, validation, test;  // each sorted
};

inline constexpr std::array<double, 3> kDefaultFractions{0.75, 0.20, 0.05};

/// Within each cluster: shuffle, then allot by largest-remainder rounding.
RowSplit stratified_split(std::span<const std::size_t> labels,
                          std::array<double, 3> fractions, std::uint64_t seed);

/// Largest-remainder apportionment of n items to the given fractions.
std::array<std::size_t, 3> apportion(std::size_t n, std::array<double, 3> fractions);

inline constexpr double kNonWorseningTolerance = 0.001;

struct EvaluationRecord {
  std::string instance_id;
  std::string config_id;
  double rho_chosen = 0.0;
  double rho_default = 0.0;
  bool improved = false;
  bool non_worsened = false;
  double pd = 0.0;
};

/// Looks up stored rho for c* and the default. Throws DataError when c* is not
/// one of the dataset's configurations.
EvaluationRecord evaluate_instance(const Dataset& ds, std::string_view instance_id,
                                   const Configuration& c_star);

// --- aggregation ----------------------------------------------------------

struct RunStats {
  std::size_t improved = 0;
  std::size_t non_worsened = 0;
  std::size_t attempted = 0;
  double pd = 0.0;  // mean |rho(c*) - rho(d)| over attempted instances
  std::optional<double> cpu_seconds;

  double im_ratio() const;
  double nw_ratio() const;
};

/// Stats for one run from its records; failed solves are not in `records`.
RunStats run_stats(std::span<const EvaluationRecord> records, std::optional<double> cpu_seconds);

struct ColumnStats {
  double sum = 0.0;
  double mean = 0.0;
  std::optional<double> stdev;  // population stdev; unset with fewer than 2 values
};

/// Aggregate over runs of one variant. Ratios are averaged per run; the sum
/// row of im/nw is the pooled count.
struct VariantSummary {
  std::vector<RunStats> runs;
  std::size_t improved_total = 0;
  std::size_t non_worsened_total = 0;
  std::size_t attempted_total = 0;
  ColumnStats im, nw, pd;
  std::optional<ColumnStats> cpu;
};

ColumnStats column_stats(std::span<const double> values);
VariantSummary summarize(std::vector<RunStats> runs);

struct ExperimentSummary {
  std::optional<VariantSummary> pao;
  std::optional<VariantSummary> pai;
};

// --- experiment -----------------------------------------------------------

enum class VariantSelection { pao, pai, both };

struct ExperimentConfig {
  VariantSelection variants = VariantSelection::both;
  Formulation pao_formulation = Formulation::pao_weighted;
  std::size_t repeats = 10;
  std::size_t n_out = 11;
  std::size_t cluster_count = 5;
  std::array<double, 3> fractions = kDefaultFractions;
  std::uint64_t master_seed = 0;
  TrainConfig train;
  std::size_t r_grid_points = kDefaultRGridPoints;
  bool standardize = true;
  bool record_timings = true;
  std::size_t jobs = 1;
};

struct VariantRun {
  Variant variant = Variant::pao;
  std::vector<EvaluationRecord> records;
  std::vector<std::string> failed_instances;
  std::vector<double> r_values;  // r* per record
  double train_loss = 0.0;
  std::optional<double> validation_loss;
  std::optional<double> test_loss;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  std::array<std::size_t, 3> split_sizes{};
  double train_seconds = 0.0;
  double solve_seconds = 0.0;
  RunStats stats;
};

struct RunResult {
  std::size_t run_index = 0;
  InstanceSplit split;
  std::vector<VariantRun> variants;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  ExperimentSummary summary;
};

/// A performance map trained on the in-sample rows of one run: standardise,
/// cluster, stratified split, then fit. Weights are mapped back to raw inputs.
struct TrainedMap {
  Variant variant = Variant::pao;
  MultiOutputModel model;
  FeatureScaling scaling;
  TrainConfig train_config;  // with the derived seed actually used
  std::array<std::size_t, 3> split_sizes{};
  double train_loss = 0.0;
  std::optional<double> validation_loss;
  std::optional<double> test_loss;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

TrainedMap train_map(const Dataset& ds, Variant variant, std::span<const std::string> in_sample,
                     const ExperimentConfig& cfg, std::size_t run_index);

/// Seed of run k's sub-stream `tag`.
std::uint64_t run_seed(std::uint64_t master_seed, std::size_t run_index, std::uint64_t tag);

RunResult run_once(const Dataset& ds, const ExperimentConfig& cfg, std::size_t run_index);
ExperimentResult run_experiment(const Dataset& ds, const ExperimentConfig& cfg);
ExperimentSummary summarize(std::span<const RunResult> runs);

}  // namespace cfglearn
