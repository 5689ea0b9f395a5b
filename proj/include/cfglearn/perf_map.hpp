#pragma once

// Raw solver performance (integrality gaps, lower is better, +inf when the
// run produced no gap) turned into a rank-scaled score rho in [0,1] where 1
// is the best observed performance.

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace cfglearn {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultGamma = 1.0;

struct PerformanceKey {
  std::string instance_id;
  std::string config_id;

  friend auto operator<=>(const PerformanceKey&, const PerformanceKey&) = default;
};

struct RawPerformance {
  std::vector<PerformanceKey> keys;
  std::vector<double> values;  // finite >= 0, or +inf
};

struct ScaledPerformance {
  std::vector<PerformanceKey> keys;
  std::vector<double> rho;
  double gamma = kDefaultGamma;
};

/// Replaces every +inf by (largest finite value) + gamma.
/// Throws DegenerateDataError if no finite value exists.
std::vector<double> clip_infinities(std::span<const double> values, double gamma);

/// 1-based ranks, ascending; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Clip, rank ascending, min-max scale the ranks and invert. The smallest gap
/// maps to 1, the largest to 0; an all-equal input maps to 1 everywhere.
std::vector<double> rank_scale(std::span<const double> values, double gamma = kDefaultGamma);
ScaledPerformance rank_scale(const RawPerformance& raw, double gamma = kDefaultGamma);

}  // namespace cfglearn
