#include "cfglearn/perf_map.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cfglearn/error.hpp"

namespace cfglearn {

namespace {

void validate(std::span<const double> values, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw ArgumentError(fmt::format("gamma must be a positive finite number, got {}", gamma));
  for (double v : values) {
    if (std::isnan(v)) throw DataError("performance value is NaN");
    if (v < 0.0) throw DataError(fmt::format("negative performance value {}", v));
  }
}

}  // namespace

std::vector<double> clip_infinities(std::span<const double> values, double gamma) {
  validate(values, gamma);
  double p_hat = -kInfinity;
  for (double v : values)
    if (std::isfinite(v)) p_hat = std::max(p_hat, v);
  if (!std::isfinite(p_hat))
    throw DegenerateDataError("performance data contains no finite value");

  std::vector<double> out(values.begin(), values.end());
  for (double& v : out)
    if (v > p_hat) v = p_hat + gamma;
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share the mean of ranks i+1..j+1.
    const double shared = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

std::vector<double> rank_scale(std::span<const double> values, double gamma) {
  const std::vector<double> clipped = clip_infinities(values, gamma);
  const std::vector<double> ranks = average_ranks(clipped);
  const auto [lo, hi] = std::minmax_element(ranks.begin(), ranks.end());
  const double min_rank = *lo, span = *hi - *lo;

  std::vector<double> rho(ranks.size(), 1.0);
  if (span > 0.0)
    for (std::size_t i = 0; i < ranks.size(); ++i) rho[i] = 1.0 - (ranks[i] - min_rank) / span;
  return rho;
}

ScaledPerformance rank_scale(const RawPerformance& raw, double gamma) {
  if (raw.keys.size() != raw.values.size())
    throw DimensionError("performance keys and values differ in length");
  return ScaledPerformance{raw.keys, rank_scale(std::span<const double>(raw.values), gamma),
                           gamma};
}

}  // namespace cfglearn
