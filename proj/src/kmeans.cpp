#include "cfglearn/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "cfglearn/error.hpp"
#include "cfglearn/random.hpp"

namespace cfglearn {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

std::size_t count_distinct_rows(const Matrix& points) {
  std::vector<std::size_t> order(points.rows());
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    auto ra = points.row(a), rb = points.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i)
    if (less(order[i - 1], order[i])) ++distinct;
  return distinct;
}

// k-means++: first centre uniform, then proportional to squared distance.
Matrix seed_centroids(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::size_t pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(points.row(pick).begin(), points.cols(), centroids.row(c).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
      total += d2[i];
    }
    if (c + 1 == k) break;
    // Sampling only ever lands on a point with positive distance, so the
    // centres are distinct.
    double target = uniform01(rng) * total;
    pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      target -= d2[i];
      if (target < 0.0) break;
    }
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations) {
  const std::size_t n = points.rows(), dim = points.cols();
  if (k == 0) throw ClusteringError("k must be positive");
  const std::size_t distinct = count_distinct_rows(points);
  if (k > distinct)
    throw ClusteringError(
        fmt::format("cannot form {} clusters from {} distinct points", k, distinct));

  Rng rng(derive_seed(seed, {0x6B6D}));
  KMeansResult result;
  result.centroids = seed_centroids(points, k, rng);
  result.labels.assign(n, k);  // sentinel: unassigned

  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 1; iter <= max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points.row(i), result.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (result.labels[i] != best) {
        result.labels[i] = best;
        changed = true;
      }
    }
    result.iterations = iter;
    if (!changed) break;

    Matrix sums(k, dim);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(result.labels[i]);
      auto src = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
      ++counts[result.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed at the point farthest from its own centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = squared_distance(points.row(i), result.centroids.row(result.labels[i]));
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        std::copy_n(points.row(far).begin(), dim, result.centroids.row(c).begin());
        continue;
      }
      auto centre = result.centroids.row(c);
      auto sum = sums.row(c);
      for (std::size_t j = 0; j < dim; ++j) centre[j] = sum[j] / static_cast<double>(counts[c]);
    }
  }

  result.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    result.inertia += squared_distance(points.row(i), result.centroids.row(result.labels[i]));
  return result;
}

}  // namespace cfglearn
