#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cfglearn/error.hpp"
#include "cfglearn/persistence.hpp"
#include "fixtures.hpp"

using namespace cfglearn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cfglearn_persist_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

StoredModel random_model(Variant v, std::size_t t, std::size_t s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  StoredModel m;
  m.variant = v;
  m.feature_dim = t;
  const std::size_t in = v == Variant::pao ? t + s : t + 1;
  const std::size_t out = v == Variant::pao ? 1 : s;
  for (std::size_t k = 0; k < out; ++k) {
    LinearModel lm;
    for (std::size_t j = 0; j < in; ++j) lm.w.push_back(n(rng) / 3.0);
    lm.b = n(rng) * 1e-7;
    m.model.outputs.push_back(lm);
  }
  m.train_config.learning_rate = 0.037;
  m.train_config.epochs = 17;
  m.train_config.seed = 99;
  FeatureScaling sc;
  for (std::size_t j = 0; j < in; ++j) {
    sc.mean.push_back(n(rng));
    sc.scale.push_back(std::exp(n(rng)));
  }
  m.feature_scaling = sc;
  m.master_seed = seed;
  return m;
}

template <class F>
std::string persistence_message(F f) {
  try {
    f();
  } catch (const PersistenceError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("model round trip is exact") {
  const auto dir = scratch("model");
  for (Variant v : {Variant::pao, Variant::pai}) {
    const StoredModel m = random_model(v, 3, 4, 12);
    save_model(dir / "m.json", m);
    const StoredModel back = load_model(dir / "m.json");
    CHECK(back.variant == v);
    CHECK(back.feature_dim == 3);
    CHECK(back.model == m.model);
    for (std::size_t k = 0; k < m.model.output_dim(); ++k) {
      CHECK(same_bits(back.model.outputs[k].b, m.model.outputs[k].b));
      for (std::size_t j = 0; j < m.model.input_dim(); ++j)
        CHECK(same_bits(back.model.outputs[k].w[j], m.model.outputs[k].w[j]));
    }
    CHECK(back.feature_scaling == m.feature_scaling);
    CHECK(back.train_config.learning_rate == 0.037);
    CHECK(back.train_config.epochs == 17);
    CHECK(back.train_config.seed == 99);
    CHECK(back.master_seed == 12);

    // Saving the loaded model reproduces the file.
    save_model(dir / "again.json", back);
    CHECK(slurp(dir / "m.json") == slurp(dir / "again.json"));
  }
  CHECK_NOTHROW(random_model(Variant::pao, 3, 4, 1).pao());
  CHECK_THROWS_AS(random_model(Variant::pai, 3, 4, 1).pao(), ArgumentError);
}

TEST_CASE("dataset round trip keeps rho and infinite gaps") {
  const auto dir = scratch("dataset");
  Dataset ds = fixtures::synthetic_dataset(5, 3, 2);
  ds.gaps(1, 2) = kInfinity;
  save_dataset(dir / "d.json", ds);
  const Dataset back = load_dataset(dir / "d.json");
  CHECK(back.instance_ids == ds.instance_ids);
  CHECK(back.config_ids == ds.config_ids);
  CHECK(back.configs == ds.configs);
  CHECK(back.default_config == ds.default_config);
  CHECK(back.gamma == ds.gamma);
  CHECK(back.seed == ds.seed);
  CHECK(std::isinf(back.gaps(1, 2)));
  for (std::size_t i = 0; i < ds.instance_count(); ++i) {
    for (std::size_t j = 0; j < ds.feature_dim(); ++j) CHECK(same_bits(back.features(i, j), ds.features(i, j)));
    for (std::size_t c = 0; c < ds.config_count(); ++c) {
      CHECK(same_bits(back.rho(i, c), ds.rho(i, c)));
      CHECK(same_bits(back.gaps(i, c), ds.gaps(i, c)));
    }
  }
  CHECK(back.schema.schema.parameter_count() == ds.schema.schema.parameter_count());
}

TEST_CASE("damaged files are rejected") {
  const auto dir = scratch("damaged");
  save_model(dir / "m.json", random_model(Variant::pao, 2, 3, 4));
  save_dataset(dir / "d.json", fixtures::synthetic_dataset(3, 2, 4));

  const std::string model = slurp(dir / "m.json");
  std::ofstream(dir / "truncated.json") << model.substr(0, model.size() / 2);
  CHECK_THROWS_AS(load_model(dir / "truncated.json"), PersistenceError);
  std::ofstream(dir / "garbage.json") << "{not json";
  CHECK_THROWS_AS(load_model(dir / "garbage.json"), PersistenceError);
  CHECK_THROWS_AS(load_dataset(dir / "garbage.json"), PersistenceError);
  CHECK_THROWS_AS(load_model(dir / "absent.json"), PersistenceError);

  auto j = model_to_json(random_model(Variant::pao, 2, 3, 4));
  j["format_version"] = kModelFormatVersion + 1;
  CHECK(persistence_message([&] { model_from_json(j); }).find("version") != std::string::npos);

  j = model_to_json(random_model(Variant::pao, 2, 3, 4));
  j["feature_dim"] = 5;
  CHECK_THROWS_AS(model_from_json(j), PersistenceError);
  j = model_to_json(random_model(Variant::pai, 2, 3, 4));
  j["weights"][0].erase(0);
  CHECK_THROWS_AS(model_from_json(j), PersistenceError);

  auto d = dataset_to_json(fixtures::synthetic_dataset(3, 2, 4));
  d["format_version"] = 0;
  CHECK_THROWS_AS(dataset_from_json(d), PersistenceError);
  d = dataset_to_json(fixtures::synthetic_dataset(3, 2, 4));
  d["rho"][0][0] = 7.0;
  CHECK_THROWS_AS(dataset_from_json(d), PersistenceError);
  d = dataset_to_json(fixtures::synthetic_dataset(3, 2, 4));
  d["configs"][1]["bits"] = d["configs"][0]["bits"];
  CHECK_THROWS_AS(dataset_from_json(d), PersistenceError);
}

TEST_CASE("train config defaults") {
  TrainConfig base;
  base.epochs = 5;
  const auto cfg = train_config_from_json(nlohmann::json{{"learning_rate", 0.5}}, base);
  CHECK(cfg.learning_rate == 0.5);
  CHECK(cfg.epochs == 5);
  const auto back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.batch_size == cfg.batch_size);
}
