#pragma once

// Sources of raw performance data: recorded runs in CSV form, a synthetic
// ground-truth oracle, and an external solver command.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfglearn/config_space.hpp"
#include "cfglearn/matrix.hpp"
#include "cfglearn/perf_map.hpp"
#include "cfglearn/pipeline.hpp"
#include "cfglearn/schema_file.hpp"

namespace cfglearn {

/// Second-smallest value of a seed multiset (the smallest when there is only
/// one). For three seeds this is the median. Throws DataError when empty.
double second_best(std::span<const double> gaps);

/// Reads `instance_id,config_id,seed,gap` rows (gap: decimal or `inf`) and
/// reduces repeated seeds per pair with second_best. Keys come out sorted.
/// Throws ParseError with the 1-based line number on malformed rows.
RawPerformance load_performance_csv(const std::filesystem::path& path);
RawPerformance parse_performance_csv(const std::string& text);

struct FeatureTable {
  std::vector<std::string> instance_ids;
  Matrix features;
};

/// Reads `instance_id,f_1,...,f_t` with a mandatory header row.
FeatureTable load_features_csv(const std::filesystem::path& path);
FeatureTable parse_features_csv(const std::string& text);

struct SyntheticSpec {
  std::vector<double> hidden_weights;  // length t + s
  double hidden_bias = 0.0;
  double noise_std = 0.0;
  double inf_probability = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// gap = max(0, 1 - s(hidden.(f, c) + bias) + N(0, noise_std)), replaced by
/// +inf with probability inf_probability. The randomness is a pure function of
/// (seed, f, c), so repeated queries agree.
double synthetic_performance(const SyntheticSpec& spec, std::span<const double> features,
                             const Configuration& c);

struct CommandSpec {
  /// Shell command with placeholders {instance}, {seed}, {timelimit} and
  /// {param:NAME} for each schema parameter. {instance}, {seed} and every
  /// {param:NAME} are required.
  std::string command_template;
  double time_limit_seconds = 60.0;
  /// Extra wall time granted past the limit before the run is killed.
  double grace_seconds = 5.0;
  std::size_t seeds_per_pair = 3;
  std::uint64_t base_seed = 1;
  /// ECMAScript regex with one capture group holding the gap; the last match
  /// in the output wins.
  std::string gap_pattern = R"(gap\s*[=:]\s*([0-9eE.+-]+|inf))";
  /// Raw outputs are written below this directory when set.
  std::optional<std::filesystem::path> log_dir;

  void validate(const ParameterSchema& schema) const;
};

/// Substitutes placeholders; values are single-quoted for the shell.
std::string render_command(const CommandSpec& spec, const ParameterSchema& schema,
                           const std::string& instance_path, const Configuration& c,
                           std::uint64_t seed);

struct CommandOutcome {
  std::string output;  // stdout and stderr interleaved
  int exit_status = 0;
  bool timed_out = false;
};

/// Runs `command` through /bin/sh with a wall-clock limit. Throws
/// ExternalError when the process cannot be spawned or the shell reports the
/// command missing (status 126/127).
CommandOutcome run_command(const std::string& command, double kill_after_seconds);

/// Parses the gap from solver output; +inf when nothing matches.
double parse_gap(const std::string& output, const std::string& pattern);

/// Runs the solver seeds_per_pair times and returns the second-best gap.
/// Unparseable or timed-out runs count as +inf.
double run_external(const CommandSpec& spec, const std::string& instance_path,
                    const Configuration& c, const ParameterSchema& schema);

struct PerformanceSource {
  enum class Kind { csv, synthetic, external };
  Kind kind = Kind::csv;
  std::filesystem::path csv_path;
  SyntheticSpec synthetic;
  CommandSpec command;
  /// External runs receive instance_dir / instance_id as {instance}.
  std::filesystem::path instance_dir;
};

/// Enumerates the feasible configurations of `doc`, queries `source` for
/// every (instance, configuration) pair and rank-scales the result. The
/// default configuration is given by id ("1-0-2"); unset means the first
/// feasible one. A CSV source missing any pair, or naming an unknown instance
/// or configuration, raises DataError.
Dataset build_dataset(const SchemaDocument& doc, const FeatureTable& features,
                      const PerformanceSource& source,
                      const std::optional<std::string>& default_config_id, double gamma,
                      std::uint64_t seed);

}  // namespace cfglearn
