#include "cfglearn/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "cfglearn/error.hpp"
#include "cfglearn/kmeans.hpp"
#include "cfglearn/perf_map.hpp"
#include "cfglearn/random.hpp"

namespace cfglearn {

namespace {

enum SeedTag : std::uint64_t {
  kSplitTag = 1,
  kClusterTag = 10,
  kStratifyTag = 20,
  kTrainTag = 30,
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double mean_loss(std::span<const TrainReport> reports, const Matrix& X, const Matrix& Y) {
  if (X.rows() == 0 || reports.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t h = 0; h < reports.size(); ++h)
    total += mean_cross_entropy(reports[h].model, X, Y.column(h));
  return total / static_cast<double>(reports.size());
}

}  // namespace

std::string_view to_string(Variant v) noexcept { return v == Variant::pao ? "pao" : "pai"; }

Variant parse_variant(std::string_view name) {
  if (name == "pao") return Variant::pao;
  if (name == "pai") return Variant::pai;
  throw ArgumentError(fmt::format("unknown variant '{}' (expected pao or pai)", name));
}

// --- dataset ----------------------------------------------------------------

std::size_t Dataset::instance_index(std::string_view id) const {
  auto it = std::lower_bound(instance_ids.begin(), instance_ids.end(), id);
  if (it == instance_ids.end() || *it != id)
    throw DataError(fmt::format("unknown instance '{}'", id));
  return static_cast<std::size_t>(it - instance_ids.begin());
}

std::size_t Dataset::config_index(const Configuration& c) const {
  for (std::size_t i = 0; i < configs.size(); ++i)
    if (configs[i] == c) return i;
  throw DataError(fmt::format("configuration {} is not part of the dataset", c.to_string()));
}

void Dataset::validate() const {
  const std::size_t n = instance_ids.size(), k = configs.size();
  if (n == 0) throw DataError("dataset has no instances");
  if (k == 0) throw DataError("dataset has no configurations");
  if (!std::is_sorted(instance_ids.begin(), instance_ids.end()) ||
      std::adjacent_find(instance_ids.begin(), instance_ids.end()) != instance_ids.end())
    throw DataError("instance ids must be unique and sorted");
  if (features.rows() != n) throw DataError("one feature row per instance required");
  if (config_ids.size() != k) throw DataError("one id per configuration required");
  if (gaps.rows() != n || gaps.cols() != k || rho.rows() != n || rho.cols() != k)
    throw DataError("performance tables must be instances x configurations");
  if (default_config >= k) throw DataError("default configuration index out of range");
  for (std::size_t c = 0; c < k; ++c) {
    if (configs[c].size() != schema.schema.dimension())
      throw DataError("configuration length does not match schema");
    if (!is_feasible(schema.constraints, configs[c]))
      throw DataError(fmt::format("configuration {} is infeasible", config_ids[c]));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c)
      if (!(rho(i, c) >= 0.0 && rho(i, c) <= 1.0))
        throw DataError("rho entries must lie in [0,1]");
}

Dataset make_dataset(SchemaDocument schema, std::vector<std::string> instance_ids,
                     Matrix features, std::vector<Configuration> configs, Matrix gaps,
                     std::size_t default_config, double gamma, std::uint64_t seed) {
  const std::size_t n = instance_ids.size(), k = configs.size();
  if (features.rows() != n || gaps.rows() != n || gaps.cols() != k)
    throw DataError("features/gaps do not match instances x configurations");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return instance_ids[a] < instance_ids[b]; });

  Dataset ds;
  ds.schema = std::move(schema);
  for (std::size_t i : order) ds.instance_ids.push_back(instance_ids[i]);
  ds.features = features.select_rows(order);
  ds.gaps = gaps.select_rows(order);
  for (const Configuration& c : configs)
    ds.config_ids.push_back(config_id(decode_configuration(ds.schema.schema, c)));
  ds.configs = std::move(configs);
  ds.default_config = default_config;
  ds.gamma = gamma;
  ds.seed = seed;

  std::vector<double> flat;
  flat.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (double v : ds.gaps.row(i)) flat.push_back(v);
  const std::vector<double> scaled = rank_scale(flat, gamma);
  ds.rho = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) ds.rho(i, c) = scaled[i * k + c];

  ds.validate();
  return ds;
}

// --- splitting --------------------------------------------------------------

InstanceSplit split_instances(std::span<const std::string> ids, std::size_t n_out,
                              std::uint64_t seed) {
  if (n_out == 0 || n_out >= ids.size())
    throw ArgumentError(fmt::format(
        "out-of-sample count must be in [1, {}), got {}", ids.size(), n_out));
  std::vector<std::string> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  Rng rng(seed);
  std::shuffle(sorted.begin(), sorted.end(), rng);

  InstanceSplit split;
  split.out_of_sample.assign(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n_out));
  split.in_sample.assign(sorted.begin() + static_cast<std::ptrdiff_t>(n_out), sorted.end());
  std::sort(split.out_of_sample.begin(), split.out_of_sample.end());
  std::sort(split.in_sample.begin(), split.in_sample.end());
  return split;
}

TrainingSet assemble_training(Variant variant, const Dataset& ds,
                              std::span<const std::string> in_sample) {
  if (in_sample.empty()) throw DataError("in-sample instance set is empty");
  std::vector<std::size_t> rows;
  for (const std::string& id : in_sample) rows.push_back(ds.instance_index(id));
  std::sort(rows.begin(), rows.end());

  const std::size_t t = ds.feature_dim(), s = ds.schema.schema.dimension();
  const std::size_t k = ds.config_count();
  const std::size_t n = rows.size() * k;
  TrainingSet ts;
  if (variant == Variant::pao) {
    ts.X = Matrix(n, t + s);
    ts.Y = Matrix(n, 1);
  } else {
    ts.X = Matrix(n, t + 1);
    ts.Y = Matrix(n, s);
  }

  std::size_t r = 0;
  for (std::size_t i : rows) {
    auto f = ds.features.row(i);
    for (std::size_t c = 0; c < k; ++c, ++r) {
      auto x = ts.X.row(r);
      std::copy(f.begin(), f.end(), x.begin());
      const double rho = ds.rho(i, c);
      const Configuration& cfg = ds.configs[c];
      if (variant == Variant::pao) {
        for (std::size_t j = 0; j < s; ++j) x[t + j] = cfg[j] ? 1.0 : 0.0;
        ts.Y(r, 0) = rho;
      } else {
        x[t] = rho;
        for (std::size_t j = 0; j < s; ++j) ts.Y(r, j) = cfg[j] ? 1.0 : 0.0;
      }
    }
  }
  return ts;
}

std::array<std::size_t, 3> apportion(std::size_t n, std::array<double, 3> fractions) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * fractions[i];
    sizes[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainder[i] = quota - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  // Hand leftovers to the largest remainders; earlier sets win ties.
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++sizes[order[k]];
  return sizes;
}

RowSplit stratified_split(std::span<const std::size_t> labels, std::array<double, 3> fractions,
                          std::uint64_t seed) {
  for (double f : fractions)
    if (!(f >= 0.0)) throw ArgumentError("split fractions must be nonnegative");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw ArgumentError("split fractions must sum to 1");

  std::size_t clusters = 0;
  for (std::size_t l : labels) clusters = std::max(clusters, l + 1);
  std::vector<std::vector<std::size_t>> members(clusters);
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

  Rng rng(seed);
  RowSplit split;
  for (auto& rows : members) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto sizes = apportion(rows.size(), fractions);
    auto it = rows.begin();
    split.train.insert(split.train.end(), it, it + static_cast<std::ptrdiff_t>(sizes[0]));
    it += static_cast<std::ptrdiff_t>(sizes[0]);
    split.validation.insert(split.validation.end(), it, it + static_cast<std::ptrdiff_t>(sizes[1]));
    it += static_cast<std::ptrdiff_t>(sizes[1]);
    split.test.insert(split.test.end(), it, rows.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// --- evaluation ---------------------------------------------------------------

EvaluationRecord evaluate_instance(const Dataset& ds, std::string_view instance_id,
                                   const Configuration& c_star) {
  const std::size_t i = ds.instance_index(instance_id);
  const std::size_t c = ds.config_index(c_star);
  EvaluationRecord rec;
  rec.instance_id = std::string(instance_id);
  rec.config_id = ds.config_ids[c];
  rec.rho_chosen = ds.rho(i, c);
  rec.rho_default = ds.rho(i, ds.default_config);
  rec.improved = rec.rho_chosen > rec.rho_default;
  rec.non_worsened = rec.rho_chosen >= rec.rho_default - kNonWorseningTolerance;
  rec.pd = std::abs(rec.rho_chosen - rec.rho_default);
  return rec;
}

// --- aggregation ----------------------------------------------------------------

double RunStats::im_ratio() const {
  return attempted == 0 ? std::nan("")
                        : static_cast<double>(improved) / static_cast<double>(attempted);
}

double RunStats::nw_ratio() const {
  return attempted == 0 ? std::nan("")
                        : static_cast<double>(non_worsened) / static_cast<double>(attempted);
}

RunStats run_stats(std::span<const EvaluationRecord> records, std::optional<double> cpu_seconds) {
  RunStats s;
  s.attempted = records.size();
  double pd_total = 0.0;
  for (const EvaluationRecord& r : records) {
    s.improved += r.improved ? 1 : 0;
    s.non_worsened += r.non_worsened ? 1 : 0;
    pd_total += r.pd;
  }
  s.pd = records.empty() ? 0.0 : pd_total / static_cast<double>(records.size());
  s.cpu_seconds = cpu_seconds;
  return s;
}

ColumnStats column_stats(std::span<const double> values) {
  ColumnStats out;
  if (values.empty()) return out;
  out.sum = std::accumulate(values.begin(), values.end(), 0.0);
  const double n = static_cast<double>(values.size());
  out.mean = out.sum / n;
  // Population spread (divide by n); a lone run reports none at all.
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stdev = std::sqrt(ss / n);
  }
  return out;
}

VariantSummary summarize(std::vector<RunStats> runs) {
  VariantSummary out;
  std::vector<double> im, nw, pd, cpu;
  bool all_cpu = !runs.empty();
  for (const RunStats& r : runs) {
    out.improved_total += r.improved;
    out.non_worsened_total += r.non_worsened;
    out.attempted_total += r.attempted;
    if (r.attempted > 0) {
      im.push_back(r.im_ratio());
      nw.push_back(r.nw_ratio());
      pd.push_back(r.pd);
    }
    if (r.cpu_seconds)
      cpu.push_back(*r.cpu_seconds);
    else
      all_cpu = false;
  }
  out.im = column_stats(im);
  out.nw = column_stats(nw);
  out.pd = column_stats(pd);
  if (all_cpu) out.cpu = column_stats(cpu);
  out.runs = std::move(runs);
  return out;
}

ExperimentSummary summarize(std::span<const RunResult> runs) {
  std::vector<RunStats> pao, pai;
  for (const RunResult& run : runs)
    for (const VariantRun& v : run.variants) (v.variant == Variant::pao ? pao : pai).push_back(v.stats);
  ExperimentSummary out;
  if (!pao.empty()) out.pao = summarize(std::move(pao));
  if (!pai.empty()) out.pai = summarize(std::move(pai));
  return out;
}

// --- experiment -----------------------------------------------------------------

std::uint64_t run_seed(std::uint64_t master_seed, std::size_t run_index, std::uint64_t tag) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(run_index), tag});
}

TrainedMap train_map(const Dataset& ds, Variant variant, std::span<const std::string> in_sample,
                     const ExperimentConfig& cfg, std::size_t run_index) {
  const std::uint64_t vtag = variant == Variant::pao ? 0 : 1;
  TrainedMap out;
  out.variant = variant;

  const TrainingSet full = assemble_training(variant, ds, in_sample);
  out.scaling = cfg.standardize ? FeatureScaling::fit(full.X) : FeatureScaling::identity(full.X.cols());
  const Matrix scaled = out.scaling.apply(full.X);

  const KMeansResult clusters =
      kmeans(scaled, cfg.cluster_count, run_seed(cfg.master_seed, run_index, kClusterTag + vtag));
  const RowSplit rows = stratified_split(clusters.labels, cfg.fractions,
                                         run_seed(cfg.master_seed, run_index, kStratifyTag + vtag));
  if (rows.train.empty()) throw DataError("training split is empty");
  out.split_sizes = {rows.train.size(), rows.validation.size(), rows.test.size()};

  const TrainingSet train_set{scaled.select_rows(rows.train), full.Y.select_rows(rows.train)};
  const TrainingSet validation{scaled.select_rows(rows.validation),
                               full.Y.select_rows(rows.validation)};
  const Matrix test_X = scaled.select_rows(rows.test);
  const Matrix test_Y = full.Y.select_rows(rows.test);

  TrainConfig tc = cfg.train;
  tc.seed = run_seed(cfg.master_seed, run_index, kTrainTag + vtag);
  out.train_config = tc;

  std::vector<TrainReport> reports;
  if (variant == Variant::pao)
    reports.push_back(train_with_report(train_set, tc, &validation));
  else
    reports = train_multi_with_report(train_set, tc, &validation);

  for (const TrainReport& r : reports) {
    out.train_loss += r.train_loss / static_cast<double>(reports.size());
    out.epochs_run = std::max(out.epochs_run, r.epochs_run);
    out.stopped_early = out.stopped_early || r.stopped_early;
    out.model.outputs.push_back(out.scaling.unscale(r.model));
  }
  if (validation.X.rows() > 0) out.validation_loss = mean_loss(reports, validation.X, validation.Y);
  if (test_X.rows() > 0) out.test_loss = mean_loss(reports, test_X, test_Y);
  return out;
}

namespace {

VariantRun run_variant(const Dataset& ds, const ExperimentConfig& cfg, std::size_t run_index,
                       const InstanceSplit& split, Variant variant) {
  VariantRun out;
  out.variant = variant;

  const auto train_start = Clock::now();
  TrainedMap map = train_map(ds, variant, split.in_sample, cfg, run_index);
  out.split_sizes = map.split_sizes;
  out.train_loss = map.train_loss;
  out.validation_loss = map.validation_loss;
  out.test_loss = map.test_loss;
  out.epochs_run = map.epochs_run;
  out.stopped_early = map.stopped_early;

  CsspProblem problem;
  problem.feasible = ds.configs;
  problem.constraints = &ds.schema.constraints;
  problem.r_grid_points = cfg.r_grid_points;
  if (variant == Variant::pao) {
    problem.formulation = cfg.pao_formulation;
    problem.model = map.model.outputs.front();
  } else {
    problem.formulation = Formulation::pai;
    problem.model = std::move(map.model);
  }
  out.train_seconds = seconds_since(train_start);

  const auto solve_start = Clock::now();
  for (const std::string& g : split.out_of_sample) {
    auto f = ds.features.row(ds.instance_index(g));
    problem.features.assign(f.begin(), f.end());
    try {
      const CsspSolution sol = solve(problem);
      out.records.push_back(evaluate_instance(ds, g, sol.config));
      out.r_values.push_back(sol.r);
    } catch (const SolveError&) {
      out.failed_instances.push_back(g);
    }
  }
  out.solve_seconds = seconds_since(solve_start);

  std::optional<double> cpu;
  if (cfg.record_timings) cpu = out.train_seconds + out.solve_seconds;
  out.stats = run_stats(out.records, cpu);
  return out;
}

}  // namespace

RunResult run_once(const Dataset& ds, const ExperimentConfig& cfg, std::size_t run_index) {
  RunResult run;
  run.run_index = run_index;
  run.split = split_instances(ds.instance_ids, cfg.n_out,
                              run_seed(cfg.master_seed, run_index, kSplitTag));
  if (cfg.variants != VariantSelection::pai)
    run.variants.push_back(run_variant(ds, cfg, run_index, run.split, Variant::pao));
  if (cfg.variants != VariantSelection::pao)
    run.variants.push_back(run_variant(ds, cfg, run_index, run.split, Variant::pai));
  return run;
}

ExperimentResult run_experiment(const Dataset& ds, const ExperimentConfig& cfg) {
  if (cfg.repeats == 0) throw ArgumentError("repeats must be positive");
  if (!is_pao(cfg.pao_formulation))
    throw ArgumentError("the PaO formulation must be one of the pao-* forms");
  ds.validate();

  ExperimentResult result;
  result.runs.resize(cfg.repeats);
  const std::size_t workers = std::clamp<std::size_t>(cfg.jobs, 1, cfg.repeats);
  if (workers == 1) {
    for (std::size_t k = 0; k < cfg.repeats; ++k) result.runs[k] = run_once(ds, cfg, k);
  } else {
    std::vector<std::exception_ptr> errors(cfg.repeats);
    std::atomic<std::size_t> next{0};
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t k = next++; k < cfg.repeats; k = next++) {
            try {
              result.runs[k] = run_once(ds, cfg, k);
            } catch (...) {
              errors[k] = std::current_exception();
            }
          }
        });
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  result.summary = summarize(result.runs);
  return result;
}

}  // namespace cfglearn
