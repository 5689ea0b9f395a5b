#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cfglearn/pipeline.hpp"

namespace cfglearn {

/// Aligned plain-text table: one row per run with im, nw, pd, CPU for each
/// variant present, followed by sum / mean / stdev rows.
std::string format_summary_table(const ExperimentSummary& summary);

/// Same content as delimited text with a header row.
std::string format_summary_csv(const ExperimentSummary& summary);

/// Per-run record file: header
/// `variant,instance_id,config_id,rho_chosen,rho_default,improved,non_worsened,pd,r`.
std::string format_records_csv(const RunResult& run);

struct LoadedRecords {
  std::vector<EvaluationRecord> pao;
  std::vector<EvaluationRecord> pai;
  bool has_pao = false;
  bool has_pai = false;
};

LoadedRecords parse_records_csv(const std::string& text);

/// Writes summary.txt, summary.csv and runs/<k>/{records.csv,run.json} under `dir`.
void write_experiment_outputs(const std::filesystem::path& dir, const ExperimentResult& result,
                              const ExperimentConfig& cfg);

/// Rebuilds the summary from a directory written by write_experiment_outputs.
ExperimentSummary load_experiment_summary(const std::filesystem::path& dir);

}  // namespace cfglearn
