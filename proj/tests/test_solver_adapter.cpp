#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cfglearn/error.hpp"
#include "cfglearn/solver_adapter.hpp"
#include "fixtures.hpp"

using namespace cfglearn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cfglearn_adapter_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string parse_error_message(const std::string& text) {
  try {
    parse_performance_csv(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("second_best examples") {
  CHECK(second_best(std::vector<double>{0.2, 0.5, 0.1}) == 0.2);
  CHECK(second_best(std::vector<double>{0.3}) == 0.3);
  CHECK(std::isinf(second_best(std::vector<double>{kInfinity, kInfinity, 0.4})));
  CHECK(second_best(std::vector<double>{kInfinity, 0.1, 0.4}) == 0.4);
  CHECK(second_best(std::vector<double>{0.7, 0.7}) == 0.7);
  CHECK_THROWS_AS(second_best(std::vector<double>{}), DataError);
}

TEST_CASE("second_best matches counting definition") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> len(1, 7), val(0, 5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> g(len(rng));
    for (double& v : g) v = val(rng) == 5 ? kInfinity : val(rng) / 4.0;
    const double r = second_best(g);
    // Exactly the value with at most one strictly smaller element and at
    // least two elements <= it (or the only one).
    const auto below = std::count_if(g.begin(), g.end(), [&](double v) { return v < r; });
    const auto upto = std::count_if(g.begin(), g.end(), [&](double v) { return v <= r; });
    CHECK(std::find(g.begin(), g.end(), r) != g.end());
    CHECK(below <= 1);
    CHECK(upto >= std::min<std::ptrdiff_t>(2, static_cast<std::ptrdiff_t>(g.size())));
  }
}

TEST_CASE("performance csv") {
  const auto raw = parse_performance_csv(
      "instance_id,config_id,seed,gap\n"
      "b,0-1,1,0.5\n"
      "a,0-0,1,0.2\n"
      "a,0-0,2,0.5\n"
      "a,0-0,3,0.1\n"
      "\n"
      "b,0-1,2,inf\n");
  REQUIRE(raw.keys.size() == 2);
  CHECK(raw.keys[0].instance_id == "a");
  CHECK(raw.values[0] == 0.2);
  CHECK(raw.keys[1].config_id == "0-1");
  CHECK(std::isinf(raw.values[1]));

  CHECK(parse_error_message("instance,config,seed,gap\na,0-0,1,0.1\n").find("line 1") !=
        std::string::npos);
  CHECK(parse_error_message("instance_id,config_id,seed,gap\na,0-0,1,0.1\na,0-0,1,0.2\n")
            .find("line 3") != std::string::npos);
  CHECK(parse_error_message("instance_id,config_id,seed,gap\na,0-0,x,0.1\n").find("line 2") !=
        std::string::npos);
  CHECK(parse_error_message("instance_id,config_id,seed,gap\na,0-0,1,-0.1\n").find("line 2") !=
        std::string::npos);
  CHECK(parse_error_message("instance_id,config_id,seed,gap\na,0-0,1\n").find("line 2") !=
        std::string::npos);
  CHECK_THROWS_AS(parse_performance_csv("instance_id,config_id,seed,gap\n"), DataError);
  CHECK_THROWS_AS(load_performance_csv("/nonexistent/perf.csv"), DataError);
}

TEST_CASE("feature csv") {
  const auto ft = parse_features_csv("instance_id,f1,f2\nx,1,2.5\ny,-3,0\n");
  CHECK(ft.instance_ids == std::vector<std::string>{"x", "y"});
  CHECK(ft.features.cols() == 2);
  CHECK(ft.features(0, 1) == 2.5);
  CHECK_THROWS_AS(parse_features_csv("id,f1\nx,1\n"), ParseError);
  CHECK_THROWS_AS(parse_features_csv("instance_id,f1\nx,1,2\n"), ParseError);
  CHECK_THROWS_AS(parse_features_csv("instance_id,f1\nx,inf\n"), ParseError);
  CHECK_THROWS_AS(parse_features_csv("instance_id,f1\nx,1\nx,2\n"), ParseError);
}

TEST_CASE("synthetic oracle") {
  SyntheticSpec spec;
  spec.hidden_weights = {0, 0, 0, 0};
  const std::vector<double> f{0.3, -1.0};
  const Configuration c({1, 0});
  CHECK(synthetic_performance(spec, f, c) == doctest::Approx(0.5));

  spec.hidden_weights = {0, 0, 50, 0};
  CHECK(synthetic_performance(spec, f, c) < 1e-12);
  CHECK(synthetic_performance(spec, f, Configuration({0, 1})) == doctest::Approx(0.5));

  spec.noise_std = 0.1;
  spec.seed = 3;
  const double a = synthetic_performance(spec, f, Configuration({0, 1}));
  CHECK(a == synthetic_performance(spec, f, Configuration({0, 1})));
  CHECK(a != 0.5);
  CHECK(a >= 0.0);
  spec.seed = 4;
  CHECK(synthetic_performance(spec, f, Configuration({0, 1})) != a);

  spec.inf_probability = 0.5;
  int infs = 0;
  for (int i = 0; i < 400; ++i) {
    const std::vector<double> g{i * 0.01, 1.0};
    if (std::isinf(synthetic_performance(spec, g, c))) ++infs;
  }
  CHECK(infs > 150);
  CHECK(infs < 250);

  CHECK_THROWS_AS(synthetic_performance(spec, std::vector<double>{1.0}, c), DimensionError);
  spec.inf_probability = 1.0;
  CHECK_THROWS_AS(spec.validate(), ArgumentError);
}

TEST_CASE("command template rendering") {
  const auto doc = fixtures::small_schema();
  CommandSpec spec;
  spec.command_template = "solve {instance} --seed {seed} --tl {timelimit} p1={param:p1} p2={param:p2}";
  spec.time_limit_seconds = 30;
  spec.validate(doc.schema);
  const auto c = encode_configuration(doc.schema, SettingTuple{1, 2});
  CHECK(render_command(spec, doc.schema, "dir/it's.lp", c, 7) ==
        "solve 'dir/it'\\''s.lp' --seed 7 --tl 30 p1='b' p2='z'");

  CommandSpec bad = spec;
  bad.command_template = "solve {instance} {seed} {param:p1}";
  CHECK_THROWS_AS(bad.validate(doc.schema), ArgumentError);
  bad.command_template = "solve {seed} {param:p1} {param:p2}";
  CHECK_THROWS_AS(bad.validate(doc.schema), ArgumentError);
  bad.command_template = "solve {instance} {seed} {param:p1} {param:p2} {param:p9}";
  CHECK_THROWS_AS(bad.validate(doc.schema), ArgumentError);
  bad = spec;
  bad.gap_pattern = "gap=[0-9]+";
  CHECK_THROWS_AS(bad.validate(doc.schema), ArgumentError);
}

TEST_CASE("gap parsing") {
  const std::string pat = CommandSpec{}.gap_pattern;
  CHECK(parse_gap("gap=0.25\n", pat) == 0.25);
  CHECK(parse_gap("gap = 0.5\nmore\ngap: 0.125\n", pat) == 0.125);
  CHECK(std::isinf(parse_gap("nothing here", pat)));
  CHECK(std::isinf(parse_gap("gap=inf", pat)));
}

TEST_CASE("external runs") {
  const auto doc = fixtures::small_schema();
  const auto c = encode_configuration(doc.schema, SettingTuple{0, 1});
  const auto dir = scratch("external");

  CommandSpec spec;
  spec.command_template = "echo gap=0.25 # {instance} {seed} {param:p1} {param:p2}";
  spec.log_dir = dir / "logs";
  CHECK(run_external(spec, "inst.lp", c, doc.schema) == 0.25);
  CHECK(fs::exists(dir / "logs" / "inst.lp__0-1" / "seed_1.log"));

  // Seed 1 hangs past the limit; the others report 0.1 and 0.2.
  const auto stub = dir / "stub.sh";
  write(stub,
        "#!/bin/sh\n"
        "case \"$2\" in\n"
        "  1) sleep 30 ;;\n"
        "  2) echo gap=0.1 ;;\n"
        "  *) echo gap=0.2 ;;\n"
        "esac\n");
  spec.command_template = "sh " + stub.string() + " {instance} {seed} {param:p1} {param:p2}";
  spec.time_limit_seconds = 0.3;
  spec.grace_seconds = 0.2;
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(run_external(spec, "inst.lp", c, doc.schema) == 0.2);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10));

  const auto out = run_command("exit 4", 5);
  CHECK(out.exit_status == 4);
  CHECK_FALSE(out.timed_out);
  CHECK(run_command("sleep 20", 0.2).timed_out);
  CHECK_THROWS_AS(run_command("/nonexistent/solver --x", 5), ExternalError);
  spec.command_template = "/nonexistent/solver {instance} {seed} {param:p1} {param:p2}";
  CHECK_THROWS_AS(run_external(spec, "inst.lp", c, doc.schema), ExternalError);
}

TEST_CASE("dataset from recorded runs") {
  const auto doc = fixtures::small_schema();
  const auto dir = scratch("csv");
  const auto ft = parse_features_csv("instance_id,f\nu,0.5\nv,1.5\n");
  std::string csv = "instance_id,config_id,seed,gap\n";
  const std::vector<std::string> cids{"0-0", "0-1", "0-2", "1-0", "1-1", "1-2"};
  for (const char* g : {"u", "v"})
    for (std::size_t k = 0; k < cids.size(); ++k) csv += fmt::format("{},{},1,{}\n", g, cids[k], 0.1 * k);
  write(dir / "perf.csv", csv);

  PerformanceSource src;
  src.csv_path = dir / "perf.csv";
  const Dataset ds = build_dataset(doc, ft, src, std::nullopt, 1.0, 0);
  CHECK(ds.instance_count() == 2);
  CHECK(ds.config_count() == 6);
  CHECK(ds.default_config == 0);
  CHECK(ds.config_ids == cids);
  CHECK(ds.rho(0, 0) == 1.0);
  CHECK(ds.rho(1, 5) == 0.0);

  const Dataset d2 = build_dataset(doc, ft, src, std::string("1-0"), 1.0, 0);
  CHECK(d2.default_config == 3);

  write(dir / "missing.csv", csv.substr(0, csv.rfind("v,1-2")));
  src.csv_path = dir / "missing.csv";
  CHECK_THROWS_AS(build_dataset(doc, ft, src, std::nullopt, 1.0, 0), DataError);

  write(dir / "extra.csv", csv + "w,0-0,1,0.3\n");
  src.csv_path = dir / "extra.csv";
  CHECK_THROWS_AS(build_dataset(doc, ft, src, std::nullopt, 1.0, 0), DataError);
}
