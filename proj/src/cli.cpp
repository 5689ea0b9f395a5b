#include "cfglearn/cli.hpp"

#include <charconv>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cfglearn/error.hpp"
#include "cfglearn/persistence.hpp"
#include "cfglearn/report.hpp"
#include "cfglearn/solver_adapter.hpp"

namespace cfglearn {

namespace {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!j.is_object()) throw ParseError(fmt::format("{} must be a JSON object", what));
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ParseError(fmt::format("unknown key '{}' in {}", key, what));
}

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && (text[pos] == ',' || std::isspace(static_cast<unsigned char>(text[pos]))))
      ++pos;
    if (pos == text.size()) break;
    std::size_t end = pos;
    while (end < text.size() && text[end] != ',' && !std::isspace(static_cast<unsigned char>(text[end])))
      ++end;
    const std::string_view tok = text.substr(pos, end - pos);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
      throw ParseError(fmt::format("malformed number '{}' in feature vector", tok));
    out.push_back(v);
    pos = end;
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticSpec synthetic_from_json(const json& j, std::uint64_t fallback_seed) {
  check_keys(j, {"hidden_weights", "hidden_bias", "noise_std", "inf_probability", "seed"},
             "synthetic spec");
  SyntheticSpec s;
  s.hidden_weights = j.at("hidden_weights").get<std::vector<double>>();
  s.hidden_bias = j.value("hidden_bias", 0.0);
  s.noise_std = j.value("noise_std", 0.0);
  s.inf_probability = j.value("inf_probability", 0.0);
  s.seed = j.value("seed", fallback_seed);
  return s;
}

CommandSpec command_from_json(const json& j, std::filesystem::path& instance_dir) {
  check_keys(j,
             {"command", "time_limit", "grace", "seeds_per_pair", "base_seed", "gap_pattern",
              "log_dir", "instance_dir"},
             "external command spec");
  CommandSpec c;
  c.command_template = j.at("command").get<std::string>();
  c.time_limit_seconds = j.value("time_limit", c.time_limit_seconds);
  c.grace_seconds = j.value("grace", c.grace_seconds);
  c.seeds_per_pair = j.value("seeds_per_pair", c.seeds_per_pair);
  c.base_seed = j.value("base_seed", c.base_seed);
  c.gap_pattern = j.value("gap_pattern", c.gap_pattern);
  if (j.contains("log_dir")) c.log_dir = j.at("log_dir").get<std::string>();
  instance_dir = j.value("instance_dir", std::string("."));
  return c;
}

void print_banner(std::ostream& err, std::uint64_t seed) {
  err << fmt::format("seed: {}\nformat versions: model {}, dataset {}\n", seed,
                     kModelFormatVersion, kDatasetFormatVersion);
}

std::string opt_value(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : "n/a"; }

// --- subcommands --------------------------------------------------------------

struct DatasetBuildArgs {
  std::string features, schema, perf, synthetic, external, output;
  std::optional<std::string> default_config;
  double gamma = kDefaultGamma;
};

int cmd_dataset_build(const DatasetBuildArgs& a, std::uint64_t seed, std::ostream& out,
                      std::ostream& err) {
  print_banner(err, seed);
  const int sources = !a.perf.empty() + !a.synthetic.empty() + !a.external.empty();
  if (sources != 1)
    throw ArgumentError("exactly one of --perf, --synthetic, --external is required");
  const SchemaDocument doc = load_schema_document(a.schema);
  const FeatureTable features = load_features_csv(a.features);

  PerformanceSource src;
  if (!a.perf.empty()) {
    src.kind = PerformanceSource::Kind::csv;
    src.csv_path = a.perf;
  } else if (!a.synthetic.empty()) {
    src.kind = PerformanceSource::Kind::synthetic;
    src.synthetic = synthetic_from_json(read_json_file(a.synthetic), seed);
  } else {
    src.kind = PerformanceSource::Kind::external;
    src.command = command_from_json(read_json_file(a.external), src.instance_dir);
  }
  const Dataset ds = build_dataset(doc, features, src, a.default_config, a.gamma, seed);
  save_dataset(a.output, ds);
  out << fmt::format("instances: {}\nconfigurations: {}\nfeatures: {}\ndefault: {}\ngamma: {}\n",
                     ds.instance_count(), ds.config_count(), ds.feature_dim(),
                     ds.config_ids[ds.default_config], ds.gamma);
  return 0;
}

struct TrainArgs {
  std::string dataset, output, variant = "pao";
  std::size_t holdout = 0;
  std::size_t clusters = 5;
  std::vector<double> fractions{kDefaultFractions.begin(), kDefaultFractions.end()};
  bool no_standardize = false;
  TrainConfig train;
};

int cmd_train(const TrainArgs& a, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  print_banner(err, seed);
  const Dataset ds = load_dataset(a.dataset);
  const Variant variant = parse_variant(a.variant);

  ExperimentConfig cfg;
  cfg.master_seed = seed;
  cfg.cluster_count = a.clusters;
  cfg.standardize = !a.no_standardize;
  cfg.train = a.train;
  cfg.train.validate();
  if (a.fractions.size() != 3) throw ArgumentError("--fractions takes three values");
  std::copy(a.fractions.begin(), a.fractions.end(), cfg.fractions.begin());

  std::vector<std::string> in_sample = ds.instance_ids;
  if (a.holdout > 0) in_sample = split_instances(ds.instance_ids, a.holdout, seed).in_sample;

  const TrainedMap map = train_map(ds, variant, in_sample, cfg, 0);
  StoredModel m;
  m.variant = variant;
  m.feature_dim = ds.feature_dim();
  m.model = map.model;
  m.train_config = map.train_config;
  if (cfg.standardize) m.feature_scaling = map.scaling;
  m.master_seed = seed;
  save_model(a.output, m);

  out << fmt::format(
      "variant: {}\ninput_dim: {}\noutput_dim: {}\nsplit: {} train, {} validation, {} test\n"
      "epochs: {}{}\ntrain_loss: {}\nvalidation_loss: {}\ntest_loss: {}\n",
      to_string(variant), m.model.input_dim(), m.model.output_dim(), map.split_sizes[0],
      map.split_sizes[1], map.split_sizes[2], map.epochs_run,
      map.stopped_early ? " (early stop)" : "", map.train_loss, opt_value(map.validation_loss),
      opt_value(map.test_loss));
  return 0;
}

CsspProblem make_problem(const StoredModel& m, Formulation f, std::span<const Configuration> feasible,
                         const ConstraintSystem& cs, std::size_t grid) {
  if (is_pao(f) != (m.variant == Variant::pao))
    throw ArgumentError(fmt::format("formulation '{}' needs a {} model, got a {} model", to_string(f),
                                    is_pao(f) ? "pao" : "pai", to_string(m.variant)));
  const std::size_t s = cs.columns();
  if (m.variant == Variant::pao && m.model.input_dim() != m.feature_dim + s)
    throw DimensionError(fmt::format("model expects {} configuration bits, schema has {}",
                                     m.model.input_dim() - m.feature_dim, s));
  if (m.variant == Variant::pai && m.model.output_dim() != s)
    throw DimensionError(fmt::format("model has {} outputs, schema has {} bits",
                                     m.model.output_dim(), s));
  CsspProblem p;
  p.formulation = f;
  if (m.variant == Variant::pao)
    p.model = m.pao();
  else
    p.model = m.model;
  p.feasible = feasible;
  p.constraints = &cs;
  p.r_grid_points = grid;
  return p;
}

Formulation resolve_formulation(const std::string& name, const StoredModel& m) {
  if (!name.empty()) return parse_formulation(name);
  return m.variant == Variant::pao ? Formulation::pao_weighted : Formulation::pai;
}

struct ConfigureArgs {
  std::string model, schema, features, features_file, formulation, record;
  std::size_t grid = kDefaultRGridPoints;
};

int cmd_configure(const ConfigureArgs& a, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  print_banner(err, seed);
  if (a.features.empty() == a.features_file.empty())
    throw ArgumentError("exactly one of --features, --features-file is required");
  const StoredModel m = load_model(a.model);
  const Formulation f = resolve_formulation(a.formulation, m);
  const SchemaDocument doc = load_schema_document(a.schema);
  const std::vector<Configuration> feasible = enumerate_feasible(doc.schema, doc.constraints);

  CsspProblem p = make_problem(m, f, feasible, doc.constraints, a.grid);
  p.features = parse_number_list(a.features.empty() ? read_text(a.features_file) : a.features);
  if (p.features.size() != m.feature_dim)
    throw DimensionError(fmt::format("model expects {} features, got {}", m.feature_dim,
                                     p.features.size()));
  const CsspSolution sol = solve(p);
  const SettingTuple settings = decode_configuration(doc.schema, sol.config);

  std::string text;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    const Parameter& par = doc.schema.parameter(i);
    text += fmt::format("{} = {}\n", par.name, par.settings[settings[i]]);
  }
  text += fmt::format("config_id: {}\nformulation: {}\nr: {}\nobjective: {}\n", config_id(settings),
                      to_string(f), sol.r, sol.objective);
  if (sol.predicted) text += fmt::format("predicted: {}\n", *sol.predicted);
  out << text;

  if (!a.record.empty()) {
    json named = json::object();
    for (std::size_t i = 0; i < settings.size(); ++i)
      named[doc.schema.parameter(i).name] = doc.schema.parameter(i).settings[settings[i]];
    json rec = {{"config_id", config_id(settings)},
                {"settings", named},
                {"bits", sol.config.to_string()},
                {"formulation", std::string(to_string(f))},
                {"r", sol.r},
                {"objective", sol.objective},
                {"predicted", sol.predicted ? json(*sol.predicted) : json(nullptr)},
                {"features", p.features},
                {"model_format_version", kModelFormatVersion},
                {"seed", seed}};
    write_text(a.record, rec.dump(1) + "\n");
  }
  return 0;
}

struct EvaluateArgs {
  std::string dataset, model, formulation, output;
  std::vector<std::string> instances;
  std::size_t grid = kDefaultRGridPoints;
};

int cmd_evaluate(const EvaluateArgs& a, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  print_banner(err, seed);
  const Dataset ds = load_dataset(a.dataset);
  const StoredModel m = load_model(a.model);
  if (m.feature_dim != ds.feature_dim())
    throw DimensionError(fmt::format("model expects {} features, dataset has {}", m.feature_dim,
                                     ds.feature_dim()));
  const Formulation f = resolve_formulation(a.formulation, m);
  CsspProblem p = make_problem(m, f, ds.configs, ds.schema.constraints, a.grid);

  RunResult run;
  VariantRun vr;
  vr.variant = m.variant;
  const std::vector<std::string>& ids = a.instances.empty() ? ds.instance_ids : a.instances;
  for (const std::string& g : ids) {
    auto row = ds.features.row(ds.instance_index(g));
    p.features.assign(row.begin(), row.end());
    try {
      const CsspSolution sol = solve(p);
      vr.records.push_back(evaluate_instance(ds, g, sol.config));
      vr.r_values.push_back(sol.r);
    } catch (const SolveError&) {
      vr.failed_instances.push_back(g);
    }
  }
  vr.stats = run_stats(vr.records, std::nullopt);
  run.variants.push_back(vr);
  const std::string csv = format_records_csv(run);
  if (!a.output.empty()) write_text(a.output, csv);
  out << csv
      << fmt::format("improved: {}/{}\nnon_worsened: {}/{}\npd: {:.6f}\nfailed: {}\n",
                     vr.stats.improved, vr.stats.attempted, vr.stats.non_worsened,
                     vr.stats.attempted, vr.stats.pd, vr.failed_instances.size());
  return 0;
}

int cmd_experiment(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                   std::optional<std::size_t> jobs, const std::string& output_dir,
                   std::ostream& out, std::ostream& err) {
  ExperimentFile file = parse_experiment_file(read_json_file(config_path));
  if (seed_flag)
    file.config.master_seed = *seed_flag;
  else if (!file.seed_given)
    file.config.master_seed = 0;
  if (jobs) file.config.jobs = *jobs;
  if (!output_dir.empty()) file.output_dir = output_dir;
  print_banner(err, file.config.master_seed);

  // A relative dataset path is read next to the config file.
  std::filesystem::path dataset_path = file.dataset;
  if (dataset_path.is_relative())
    dataset_path = std::filesystem::path(config_path).parent_path() / dataset_path;
  const Dataset ds = load_dataset(dataset_path);
  const ExperimentResult result = run_experiment(ds, file.config);
  if (!file.output_dir.empty()) write_experiment_outputs(file.output_dir, result, file.config);
  out << format_summary_table(result.summary);
  return 0;
}

int cmd_report(const std::string& dir, bool csv, std::uint64_t seed, std::ostream& out,
               std::ostream& err) {
  print_banner(err, seed);
  const ExperimentSummary s = load_experiment_summary(dir);
  out << (csv ? format_summary_csv(s) : format_summary_table(s));
  return 0;
}

}  // namespace

ExperimentFile parse_experiment_file(const json& j) {
  try {
    check_keys(j,
               {"dataset", "output_dir", "variant", "formulation", "repeats", "n_out",
                "cluster_count", "fractions", "master_seed", "train", "r_grid_points",
                "standardize", "record_timings", "jobs"},
               "experiment config");
    ExperimentFile f;
    f.dataset = j.at("dataset").get<std::string>();
    f.output_dir = j.value("output_dir", std::string());
    ExperimentConfig& c = f.config;
    const std::string variant = j.value("variant", std::string("both"));
    if (variant == "pao")
      c.variants = VariantSelection::pao;
    else if (variant == "pai")
      c.variants = VariantSelection::pai;
    else if (variant == "both")
      c.variants = VariantSelection::both;
    else
      throw ParseError(fmt::format("variant must be pao, pai or both, got '{}'", variant));
    if (j.contains("formulation")) {
      c.pao_formulation = parse_formulation(j.at("formulation").get<std::string>());
      if (!is_pao(c.pao_formulation))
        throw ParseError("formulation names the PaO objective; use one of the pao-* forms");
    }
    c.repeats = j.value("repeats", c.repeats);
    c.n_out = j.value("n_out", c.n_out);
    c.cluster_count = j.value("cluster_count", c.cluster_count);
    if (j.contains("fractions")) {
      const auto fr = j.at("fractions").get<std::vector<double>>();
      if (fr.size() != 3) throw ParseError("fractions must have three entries");
      std::copy(fr.begin(), fr.end(), c.fractions.begin());
    }
    if (j.contains("master_seed")) {
      c.master_seed = j.at("master_seed").get<std::uint64_t>();
      f.seed_given = true;
    }
    if (j.contains("train")) {
      check_keys(j.at("train"),
                 {"learning_rate", "epochs", "batch_size", "seed", "weight_init_scale",
                  "l2_penalty", "patience"},
                 "train section");
      c.train = train_config_from_json(j.at("train"), c.train);
    }
    c.train.validate();
    c.r_grid_points = j.value("r_grid_points", c.r_grid_points);
    c.standardize = j.value("standardize", c.standardize);
    c.record_timings = j.value("record_timings", c.record_timings);
    c.jobs = j.value("jobs", c.jobs);
    return f;
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("malformed experiment config: {}", e.what()));
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learn solver performance maps and configure new instances"};
  app.name("cfglearn");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  auto add_seed = [&](CLI::App* sub) {
    return sub->add_option("--seed", seed, "Master seed (default 0)");
  };

  DatasetBuildArgs db;
  auto* build = app.add_subcommand("dataset-build", "Build a ranked dataset file");
  build->add_option("--features", db.features, "Features CSV")->required();
  build->add_option("--schema", db.schema, "Schema JSON")->required();
  build->add_option("--perf", db.perf, "Performance CSV source");
  build->add_option("--synthetic", db.synthetic, "Synthetic oracle spec (JSON)");
  build->add_option("--external", db.external, "External command spec (JSON)");
  build->add_option("--gamma", db.gamma, "Penalty added to the worst finite gap for +inf");
  build->add_option("--default", db.default_config, "Default configuration id, e.g. 1-0-2");
  build->add_option("--output,-o", db.output, "Dataset file to write")->required();
  add_seed(build);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a performance map");
  train->add_option("--dataset", tr.dataset)->required();
  train->add_option("--variant", tr.variant)->check(CLI::IsMember({"pao", "pai"}));
  train->add_option("--output,-o", tr.output)->required();
  train->add_option("--holdout", tr.holdout, "Instances withheld from training");
  train->add_option("--clusters", tr.clusters);
  train->add_option("--fractions", tr.fractions, "train validation test")->expected(3);
  train->add_flag("--no-standardize", tr.no_standardize);
  train->add_option("--learning-rate", tr.train.learning_rate);
  train->add_option("--epochs", tr.train.epochs);
  train->add_option("--batch-size", tr.train.batch_size);
  train->add_option("--l2", tr.train.l2_penalty);
  train->add_option("--patience", tr.train.patience);
  train->add_option("--init-scale", tr.train.weight_init_scale);
  add_seed(train);

  ConfigureArgs cf;
  auto* configure = app.add_subcommand("configure", "Choose a configuration for one instance");
  configure->add_option("--model", cf.model)->required();
  configure->add_option("--schema", cf.schema)->required();
  configure->add_option("--features", cf.features, "Inline feature vector, comma separated");
  configure->add_option("--features-file", cf.features_file);
  configure->add_option("--formulation", cf.formulation);
  configure->add_option("--record", cf.record, "Write a JSON record here");
  configure->add_option("--r-grid", cf.grid);
  add_seed(configure);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score chosen configurations on a dataset");
  evaluate->add_option("--dataset", ev.dataset)->required();
  evaluate->add_option("--model", ev.model)->required();
  evaluate->add_option("--formulation", ev.formulation);
  evaluate->add_option("--instances", ev.instances)->delimiter(',');
  evaluate->add_option("--output,-o", ev.output, "Records CSV to write");
  evaluate->add_option("--r-grid", ev.grid);
  add_seed(evaluate);

  std::string exp_config, exp_out;
  std::size_t exp_jobs = 1;
  auto* experiment = app.add_subcommand("experiment", "Run the repeated experiment");
  experiment->add_option("--config", exp_config)->required();
  experiment->add_option("--output-dir", exp_out);
  auto* jobs_opt = experiment->add_option("--jobs", exp_jobs);
  auto* exp_seed = add_seed(experiment);

  std::string report_dir;
  bool report_csv = false;
  auto* report = app.add_subcommand("report", "Re-render a stored experiment summary");
  report->add_option("--dir", report_dir)->required();
  report->add_flag("--csv", report_csv);
  add_seed(report);

  std::vector<const char*> argv{"cfglearn"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_code(ErrorKind::usage);
  }

  try {
    if (*build) return cmd_dataset_build(db, seed, out, err);
    if (*train) return cmd_train(tr, seed, out, err);
    if (*configure) return cmd_configure(cf, seed, out, err);
    if (*evaluate) return cmd_evaluate(ev, seed, out, err);
    if (*experiment)
      return cmd_experiment(exp_config, *exp_seed ? std::optional(seed) : std::nullopt,
                            *jobs_opt ? std::optional(exp_jobs) : std::nullopt, exp_out, out, err);
    return cmd_report(report_dir, report_csv, seed, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::data);
  }
}

}  // namespace cfglearn
