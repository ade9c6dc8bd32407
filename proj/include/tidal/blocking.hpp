#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tidal/geometry.hpp"
#include "tidal/param_table.hpp"

namespace tidal {

struct MortonKey {
  std::uint64_t code = 0;
  auto operator<=>(const MortonKey&) const = default;
};

// Quantization bits per axis.
template <int Dims>
inline constexpr int kMortonBits = Dims == 3 ? 21 : 31;

// Interleaves the per-axis bits, x lowest: bit b of axis a lands at bit
// b*Dims + a of the code.
template <int Dims>
MortonKey morton_code(const std::array<std::uint32_t, Dims>& q) {
  static_assert(Dims == 2 || Dims == 3);
  constexpr int bits = kMortonBits<Dims>;
  std::uint64_t code = 0;
  for (int a = 0; a < Dims; ++a) {
    if (q[a] >= (std::uint64_t{1} << bits)) {
      throw std::out_of_range("morton coordinate " + std::to_string(q[a]) + " exceeds " + std::to_string(bits) +
                              " bits");
    }
    for (int b = 0; b < bits; ++b) {
      code |= static_cast<std::uint64_t>((q[a] >> b) & 1u) << (b * Dims + a);
    }
  }
  return MortonKey{code};
}

// Axis-aligned box used to quantize centers. Fixed at build time.
struct QuantBox {
  Vec3 lo;
  Vec3 hi;

  static QuantBox around(std::span<const Vec3> pts) {
    QuantBox box{pts.front(), pts.front()};
    for (const Vec3& p : pts) {
      box.lo = {std::min(box.lo.x, p.x), std::min(box.lo.y, p.y), std::min(box.lo.z, p.z)};
      box.hi = {std::max(box.hi.x, p.x), std::max(box.hi.y, p.y), std::max(box.hi.z, p.z)};
    }
    return box;
  }

  // Out-of-box coordinates clamp to the edge.
  template <int Dims>
  std::array<std::uint32_t, Dims> quantize(const Vec3& p) const {
    constexpr double top = static_cast<double>((std::uint64_t{1} << kMortonBits<Dims>) - 1);
    auto axis = [&](double v, double a, double b) -> std::uint32_t {
      if (!(b > a)) return 0;
      const double t = std::clamp((v - a) / (b - a), 0.0, 1.0);
      return static_cast<std::uint32_t>(std::floor(t * top));
    };
    std::array<std::uint32_t, Dims> q{};
    q[0] = axis(p.x, lo.x, hi.x);
    q[1] = axis(p.y, lo.y, hi.y);
    if constexpr (Dims == 3) q[2] = axis(p.z, lo.z, hi.z);
    return q;
  }
};

struct BlockBound {
  Vec3 center;
  double radius = 0.0;
};

// Smallest radius around `center` that covers every (point, extent) pair.
inline double covering_radius(const Vec3& center, std::span<const Vec3> centers, std::span<const double> extents) {
  double r = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) r = std::max(r, distance(centers[i], center) + extents[i]);
  return r;
}

// Centroid-centered tight bound. Used at build time and at explicit recompute barriers.
inline BlockBound recompute_bound(std::span<const Vec3> centers, std::span<const double> extents) {
  if (centers.empty()) return {};
  Vec3 c;
  for (const Vec3& p : centers) c += p;
  c = c * (1.0 / static_cast<double>(centers.size()));
  return {c, covering_radius(c, centers, extents)};
}

// Keeps the center, only grows the radius.
inline BlockBound refresh_bound(const BlockBound& bound, std::span<const Vec3> moved_centers,
                                std::span<const double> extents) {
  return {bound.center, std::max(bound.radius, covering_radius(bound.center, moved_centers, extents))};
}

enum class BlockOrder { morton, random };

struct Layout {
  std::vector<std::uint64_t> permutation;  // sorted position -> original index
  std::vector<BlockBound> bounds;          // one per block
  QuantBox box;
};

template <int Dims>
std::vector<std::uint64_t> morton_permutation(std::span<const Vec3> centers, const QuantBox& box) {
  std::vector<std::pair<MortonKey, std::uint64_t>> keyed(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) keyed[i] = {morton_code<Dims>(box.quantize<Dims>(centers[i])), i};
  std::sort(keyed.begin(), keyed.end());  // ties fall back to the original index
  std::vector<std::uint64_t> perm(centers.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) perm[i] = keyed[i].second;
  return perm;
}

// Sorts primitives (Morton or seeded random), cuts them into blocks of B and
// computes a conservative bound for each block.
inline Layout build_layout(std::span<const Vec3> centers, std::span<const double> extents, const TableConfig& cfg,
                           int dims = 3, BlockOrder order = BlockOrder::morton, std::uint64_t seed = 0) {
  if (centers.empty()) throw std::invalid_argument("build_layout: no primitives");
  if (centers.size() != extents.size() || centers.size() != cfg.n_primitives) {
    throw std::invalid_argument("build_layout: centers/extents/config size mismatch");
  }
  if (dims != 2 && dims != 3) throw std::invalid_argument("build_layout: dims must be 2 or 3");

  Layout layout;
  layout.box = QuantBox::around(centers);
  if (order == BlockOrder::random) {
    layout.permutation.resize(centers.size());
    std::iota(layout.permutation.begin(), layout.permutation.end(), std::uint64_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(layout.permutation.begin(), layout.permutation.end(), rng);
  } else if (dims == 2) {
    layout.permutation = morton_permutation<2>(centers, layout.box);
  } else {
    layout.permutation = morton_permutation<3>(centers, layout.box);
  }

  const std::uint64_t k_blocks = cfg.k_blocks();
  layout.bounds.reserve(k_blocks);
  std::vector<Vec3> pts;
  std::vector<double> ext;
  for (BlockId k = 0; k < k_blocks; ++k) {
    pts.clear();
    ext.clear();
    const std::uint64_t first = static_cast<std::uint64_t>(k) * cfg.block_size;
    for (std::uint64_t j = first; j < first + cfg.rows_in_block(k); ++j) {
      pts.push_back(centers[layout.permutation[j]]);
      ext.push_back(extents[layout.permutation[j]]);
    }
    layout.bounds.push_back(recompute_bound(pts, ext));
  }
  return layout;
}

// Column map of a parameter row: where the center and log-scales live.
struct RowLayout {
  int dims = 2;
  std::array<int, 3> center_cols{0, 1, -1};
  std::array<int, 3> log_scale_cols{2, 3, -1};

  // x, y, log sx, log sy, theta, r, g, b, opacity logit.
  static RowLayout toy2d() { return {2, {0, 1, -1}, {2, 3, -1}}; }
  // xyz, f_dc(3), f_rest(45), opacity, scale(3), rot(4).
  static RowLayout splat3d() { return {3, {0, 1, 2}, {52, 53, 54}}; }

  std::uint32_t min_dim() const {
    int m = 0;
    for (int c : center_cols) m = std::max(m, c);
    for (int c : log_scale_cols) m = std::max(m, c);
    return static_cast<std::uint32_t>(m + 1);
  }

  Vec3 center(const float* row) const {
    return {row[center_cols[0]], row[center_cols[1]], center_cols[2] >= 0 ? row[center_cols[2]] : 0.0};
  }

  // Three times the largest axis scale.
  double extent(const float* row) const {
    double s = 0.0;
    for (int c : log_scale_cols)
      if (c >= 0) s = std::max(s, std::exp(static_cast<double>(row[c])));
    return 3.0 * s;
  }
};

}  // namespace tidal
