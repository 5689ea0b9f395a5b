#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cfglearn/error.hpp"
#include "cfglearn/pipeline.hpp"
#include "cfglearn/report.hpp"
#include "fixtures.hpp"

using namespace cfglearn;

namespace {

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("i{:02}", i));
  return out;
}

RunStats stats(std::size_t im, std::size_t nw, std::size_t n, double pd) {
  RunStats r;
  r.improved = im;
  r.non_worsened = nw;
  r.attempted = n;
  r.pd = pd;
  return r;
}

}  // namespace

TEST_CASE("instance split") {
  const auto all = ids(41);
  const auto s = split_instances(all, 11, 3);
  CHECK(s.out_of_sample.size() == 11);
  CHECK(s.in_sample.size() == 30);
  std::set<std::string> u(s.in_sample.begin(), s.in_sample.end());
  for (const auto& g : s.out_of_sample) CHECK(u.insert(g).second);
  CHECK(u.size() == 41);
  CHECK(std::is_sorted(s.in_sample.begin(), s.in_sample.end()));

  const auto again = split_instances(all, 11, 3);
  CHECK(again.out_of_sample == s.out_of_sample);
  CHECK(split_instances(all, 40, 1).in_sample.size() == 1);
  CHECK_THROWS_AS(split_instances(all, 0, 1), ArgumentError);
  CHECK_THROWS_AS(split_instances(all, 41, 1), ArgumentError);
}

TEST_CASE("training set shapes") {
  const Dataset ds = fixtures::synthetic_dataset(4, 2, 7);
  const std::vector<std::string> in{ds.instance_ids[0], ds.instance_ids[2]};
  const auto pao = assemble_training(Variant::pao, ds, in);
  CHECK(pao.X.rows() == 12);
  CHECK(pao.X.cols() == 2 + 5);
  CHECK(pao.Y.cols() == 1);
  const auto pai = assemble_training(Variant::pai, ds, in);
  CHECK(pai.X.rows() == 12);
  CHECK(pai.X.cols() == 2 + 1);
  CHECK(pai.Y.cols() == 5);
  // Row 7 is instance 2, configuration 1.
  CHECK(pao.X(7, 0) == ds.features(2, 0));
  CHECK(pao.Y(7, 0) == ds.rho(2, 1));
  CHECK(pai.X(7, 2) == ds.rho(2, 1));
  CHECK(pai.Y(7, 4) == (ds.configs[1][4] ? 1.0 : 0.0));

  CHECK_THROWS_AS(assemble_training(Variant::pao, ds, std::vector<std::string>{}), DataError);
  CHECK_THROWS_AS(assemble_training(Variant::pao, ds, std::vector<std::string>{"nope"}), DataError);
}

TEST_CASE("largest-remainder apportionment") {
  CHECK(apportion(20, kDefaultFractions) == std::array<std::size_t, 3>{15, 4, 1});
  CHECK(apportion(3, kDefaultFractions) == std::array<std::size_t, 3>{2, 1, 0});
  CHECK(apportion(0, kDefaultFractions) == std::array<std::size_t, 3>{0, 0, 0});
  for (std::size_t n = 1; n < 200; ++n) {
    const auto a = apportion(n, kDefaultFractions);
    CHECK(a[0] + a[1] + a[2] == n);
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(std::abs(static_cast<double>(a[k]) - kDefaultFractions[k] * n) < 1.0);
  }
}

TEST_CASE("stratified split") {
  const std::vector<std::size_t> one(20, 0);
  const auto s = stratified_split(one, kDefaultFractions, 4);
  CHECK(s.train.size() == 15);
  CHECK(s.validation.size() == 4);
  CHECK(s.test.size() == 1);

  std::vector<std::size_t> two;
  for (std::size_t i = 0; i < 40; ++i) two.push_back(i % 2);
  const auto t = stratified_split(two, kDefaultFractions, 4);
  auto count = [&](const std::vector<std::size_t>& rows, std::size_t label) {
    return std::count_if(rows.begin(), rows.end(), [&](std::size_t r) { return two[r] == label; });
  };
  CHECK(count(t.train, 0) == count(t.train, 1));
  CHECK(count(t.validation, 0) == count(t.validation, 1));
  std::vector<std::size_t> all;
  for (const auto* part : {&t.train, &t.validation, &t.test}) all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 40; ++i) CHECK(all[i] == i);
}

TEST_CASE("instance evaluation") {
  Dataset ds = fixtures::synthetic_dataset(2, 1, 3);
  const std::string g = ds.instance_ids[0];
  ds.rho(0, ds.default_config) = 0.5;
  ds.rho(0, 3) = 0.7;
  auto r = evaluate_instance(ds, g, ds.configs[3]);
  CHECK(r.improved);
  CHECK(r.non_worsened);
  CHECK(r.pd == doctest::Approx(0.2));

  ds.rho(0, 3) = 0.4995;
  r = evaluate_instance(ds, g, ds.configs[3]);
  CHECK_FALSE(r.improved);
  CHECK(r.non_worsened);
  CHECK(r.pd == doctest::Approx(0.0005));

  r = evaluate_instance(ds, g, ds.configs[ds.default_config]);
  CHECK_FALSE(r.improved);
  CHECK(r.non_worsened);
  CHECK(r.pd == 0.0);

  CHECK_THROWS_AS(evaluate_instance(ds, g, Configuration({1, 1, 0, 0, 0})), DataError);
}

TEST_CASE("aggregation over runs") {
  // Improvement counts of a ten-run table; attempts vary per run.
  const std::vector<std::pair<int, int>> im{{0, 8}, {0, 11}, {4, 9}, {0, 9}, {3, 10},
                                            {8, 9}, {5, 10}, {7, 8}, {0, 9}, {8, 10}};
  std::vector<RunStats> runs;
  for (auto [a, n] : im) runs.push_back(stats(a, a, n, 0.1));
  const auto s = summarize(runs);
  CHECK(s.improved_total == 35);
  CHECK(s.attempted_total == 93);
  CHECK(s.im.mean == doctest::Approx(0.38).epsilon(0.005 / 0.38));
  REQUIRE(s.im.stdev.has_value());
  CHECK(std::abs(*s.im.stdev - 0.36) <= 0.005);
  double ss = 0;
  for (const auto& r : runs) ss += (r.im_ratio() - s.im.mean) * (r.im_ratio() - s.im.mean);
  CHECK(std::abs(*s.im.stdev - std::sqrt(ss / 10)) <= 1e-12);
  CHECK_FALSE(s.cpu.has_value());

  double sum = 0;
  for (const auto& r : runs) sum += r.im_ratio();
  CHECK(std::abs(s.im.sum - sum) <= 1e-12);

  const auto single = summarize(std::vector<RunStats>{stats(1, 2, 3, 0.2)});
  CHECK_FALSE(single.im.stdev.has_value());
  const std::string table = format_summary_table(ExperimentSummary{single, std::nullopt});
  CHECK(table.find("n/a") != std::string::npos);
}

TEST_CASE("experiment is deterministic and respects out-of-sample isolation") {
  const Dataset ds = fixtures::synthetic_dataset(12, 3, 11);
  ExperimentConfig cfg;
  cfg.repeats = 2;
  cfg.n_out = 3;
  cfg.cluster_count = 3;
  cfg.master_seed = 4;
  cfg.train.epochs = 30;
  cfg.record_timings = false;
  const auto a = run_experiment(ds, cfg);
  const auto b = run_experiment(ds, cfg);
  REQUIRE(a.runs.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(format_records_csv(a.runs[k]) == format_records_csv(b.runs[k]));
    CHECK(a.runs[k].variants.size() == 2);
    for (const auto& v : a.runs[k].variants) {
      CHECK(v.records.size() == 3);
      for (const auto& rec : v.records) {
        CHECK(std::find(a.runs[k].split.out_of_sample.begin(), a.runs[k].split.out_of_sample.end(),
                        rec.instance_id) != a.runs[k].split.out_of_sample.end());
        CHECK(is_feasible(ds.schema.constraints, ds.configs[ds.config_index(
                                                      encode_configuration(ds.schema.schema,
                                                                           parse_config_id(ds.schema.schema, rec.config_id)))]));
        if (rec.improved) CHECK(rec.non_worsened);
      }
    }
  }
  CHECK(format_summary_table(a.summary) == format_summary_table(b.summary));

  cfg.jobs = 2;
  const auto parallel = run_experiment(ds, cfg);
  CHECK(format_summary_csv(parallel.summary) == format_summary_csv(a.summary));

  cfg.jobs = 1;
  cfg.master_seed = 5;
  const auto other = run_experiment(ds, cfg);
  CHECK(other.runs[0].split.out_of_sample != a.runs[0].split.out_of_sample);
}

TEST_CASE("train_map keeps out-of-sample instances away from the model") {
  const Dataset ds = fixtures::synthetic_dataset(10, 2, 21);
  ExperimentConfig cfg;
  cfg.cluster_count = 2;
  cfg.train.epochs = 20;
  const auto split = split_instances(ds.instance_ids, 3, 1);
  const auto map = train_map(ds, Variant::pao, split.in_sample, cfg, 0);
  CHECK(map.split_sizes[0] + map.split_sizes[1] + map.split_sizes[2] == 7 * ds.config_count());
  CHECK(map.model.input_dim() == 2 + 5);
  const auto pai = train_map(ds, Variant::pai, split.in_sample, cfg, 0);
  CHECK(pai.model.output_dim() == 5);
  CHECK(pai.model.input_dim() == 3);
}
