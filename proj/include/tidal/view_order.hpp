#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tidal/geometry.hpp"

namespace tidal {

enum class OrderMode { shuffle, trajectory };

inline std::string to_string(OrderMode m) { return m == OrderMode::shuffle ? "shuffle" : "trajectory"; }

struct ViewOrder {
  std::vector<std::size_t> permutation;
  OrderMode mode = OrderMode::trajectory;
};

inline double path_length(std::span<const Vec3> positions, const std::vector<std::size_t>& order) {
  double len = 0.0;
  for (std::size_t t = 1; t < order.size(); ++t) len += distance(positions[order[t - 1]], positions[order[t]]);
  return len;
}

namespace detail {

inline bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  return a.z < b.z;
}

// Lloyd's k-means with k-means++ seeding. Returns a cluster label per point.
inline std::vector<std::size_t> kmeans(std::span<const Vec3> pts, std::size_t k, std::uint64_t seed) {
  const std::size_t n = pts.size();
  std::mt19937_64 rng(seed);
  std::vector<Vec3> centers;
  centers.reserve(k);
  centers.push_back(pts[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const Vec3& c : centers) best = std::min(best, dot(pts[i] - c, pts[i] - c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) break;  // fewer distinct points than k
    double pickv = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (pickv < d2[i]) {
        pick = i;
        break;
      }
      pickv -= d2[i];
    }
    centers.push_back(pts[pick]);
  }

  std::vector<std::size_t> label(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::max();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = dot(pts[i] - centers[c], pts[i] - centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (label[i] != best) changed = true;
      label[i] = best;
    }
    std::vector<Vec3> sum(centers.size());
    std::vector<std::size_t> count(centers.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[label[i]] += pts[i];
      ++count[label[i]];
    }
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (count[c] > 0) centers[c] = sum[c] * (1.0 / static_cast<double>(count[c]));
    if (!changed && iter > 0) break;
  }
  return label;
}

}  // namespace detail

// Clustered nearest-neighbour tour: k-means with k = ceil(sqrt(M)), then a
// greedy tour that exhausts the current cluster before jumping to the
// nearest unvisited camera. Starts at the lexicographically smallest
// position.
inline std::vector<std::size_t> trajectory_order(std::span<const Vec3> pts, std::uint64_t seed) {
  const std::size_t n = pts.size();
  if (n == 0) return {};
  const auto k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::vector<std::size_t> label = detail::kmeans(pts, k, seed);

  std::size_t cur = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (detail::lex_less(pts[i], pts[cur])) cur = i;

  std::vector<bool> visited(n, false);
  std::vector<std::size_t> order;
  order.reserve(n);
  visited[cur] = true;
  order.push_back(cur);
  while (order.size() < n) {
    std::size_t best = n;
    double bd = std::numeric_limits<double>::max();
    // Same cluster first.
    for (std::size_t i = 0; i < n; ++i) {
      if (visited[i] || label[i] != label[cur]) continue;
      const double d = distance(pts[cur], pts[i]);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    if (best == n) {
      for (std::size_t i = 0; i < n; ++i) {
        if (visited[i]) continue;
        const double d = distance(pts[cur], pts[i]);
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
    }
    visited[best] = true;
    order.push_back(best);
    cur = best;
  }
  return order;
}

inline ViewOrder order_views(std::span<const Vec3> camera_positions, OrderMode mode, std::uint64_t seed) {
  ViewOrder out;
  out.mode = mode;
  if (mode == OrderMode::trajectory) {
    out.permutation = trajectory_order(camera_positions, seed);
  } else {
    out.permutation.resize(camera_positions.size());
    std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(out.permutation.begin(), out.permutation.end(), rng);
  }
  return out;
}

// View index used at iteration t, cycling through epochs. Shuffle mode draws
// a fresh permutation per epoch; trajectory mode repeats its tour.
class ViewSchedule {
 public:
  ViewSchedule(std::vector<Vec3> positions, OrderMode mode, std::uint64_t seed)
      : positions_(std::move(positions)), mode_(mode), seed_(seed) {}

  std::size_t view_at(std::uint64_t t) {
    const std::size_t m = positions_.size();
    const std::uint64_t epoch = t / m;
    if (epoch != cached_epoch_ || cached_.permutation.empty()) {
      cached_ = order_views(positions_, mode_, mode_ == OrderMode::shuffle ? seed_ + epoch : seed_);
      cached_epoch_ = epoch;
    }
    return cached_.permutation[t % m];
  }

  std::size_t size() const { return positions_.size(); }

 private:
  std::vector<Vec3> positions_;
  OrderMode mode_;
  std::uint64_t seed_;
  ViewOrder cached_;
  std::uint64_t cached_epoch_ = ~std::uint64_t{0};
};

}  // namespace tidal
