#pragma once

#include <random>
#include <string>

#include <fmt/format.h>

#include "cfglearn/solver_adapter.hpp"

namespace fixtures {

inline cfglearn::SchemaDocument small_schema() {
  return cfglearn::parse_schema_document(nlohmann::json::parse(R"({
    "parameters": [{"name": "p1", "settings": ["a", "b"]},
                   {"name": "p2", "settings": ["x", "y", "z"]}],
    "constraints": []})"));
}

inline cfglearn::FeatureTable random_features(std::size_t n, std::size_t t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  cfglearn::FeatureTable ft;
  ft.features = cfglearn::Matrix(n, t);
  for (std::size_t i = 0; i < n; ++i) {
    ft.instance_ids.push_back(fmt::format("g{:02}", i));
    for (std::size_t j = 0; j < t; ++j) ft.features(i, j) = u(rng);
  }
  return ft;
}

/// Synthetic dataset over the 6-configuration schema with configuration
/// effects strong enough that the map is learnable.
inline cfglearn::Dataset synthetic_dataset(std::size_t n, std::size_t t, std::uint64_t seed,
                                           double noise = 0.01) {
  const auto doc = small_schema();
  cfglearn::PerformanceSource src;
  src.kind = cfglearn::PerformanceSource::Kind::synthetic;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t j = 0; j < t; ++j) src.synthetic.hidden_weights.push_back(u(rng));
  for (double w : {-1.0, 1.0, -2.0, 0.5, 2.0}) src.synthetic.hidden_weights.push_back(w);
  src.synthetic.noise_std = noise;
  src.synthetic.seed = seed;
  return cfglearn::build_dataset(doc, random_features(n, t, seed), src, std::string("0-0"), 1.0, seed);
}

}  // namespace fixtures
