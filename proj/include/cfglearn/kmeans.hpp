#pragma once

#include <cstdint>
#include <vector>

#include "cfglearn/matrix.hpp"

namespace cfglearn {

inline constexpr std::size_t kKMeansMaxIterations = 300;

struct KMeansResult {
  std::vector<std::size_t> labels;  // one per row, in [0, k)
  Matrix centroids;                 // k x dim
  std::size_t iterations = 0;
  double inertia = 0.0;  // sum of squared distances to assigned centroid
};

/// Lloyd's algorithm with k-means++ seeding. Iterates until assignments stop
/// changing or `max_iterations` is reached. An empty cluster is re-seeded at
/// the point farthest from its current centroid. Deterministic in `seed`.
/// Throws ClusteringError when k is zero or exceeds the number of distinct rows.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations = kKMeansMaxIterations);

}  // namespace cfglearn
