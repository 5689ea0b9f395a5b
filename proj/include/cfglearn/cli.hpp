#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfglearn/pipeline.hpp"

namespace cfglearn {

/// Runs the command line with `args` excluding the program name. Returns the
/// process exit code: 0 success, 1 usage, 2 data, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ExperimentFile {
  std::filesystem::path dataset;
  std::filesystem::path output_dir;  // empty: print only
  ExperimentConfig config;
  bool seed_given = false;  // master_seed present in the file
};

/// Parses the experiment configuration document. Unknown keys are rejected.
ExperimentFile parse_experiment_file(const nlohmann::json& j);

}  // namespace cfglearn
