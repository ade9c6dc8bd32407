#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numbers>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <variant>
#include <vector>

#include "tidal/blocking.hpp"
#include "tidal/geometry.hpp"
#include "tidal/param_table.hpp"
#include "tidal/resident_arena.hpp"

namespace tidal {

// Pinhole camera looking down its local -z axis.
struct PerspectiveCamera {
  Mat3 rotation;     // world-from-camera
  Vec3 position;     // camera center in world
  double fov_y = std::numbers::pi / 2;
  double aspect = 1.0;
  double near_depth = 0.1;
  double far_depth = 100.0;
};

// Axis-aligned 2D viewport [x0,x1] x [y0,y1] on the z=0 plane.
struct WindowCamera {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  Vec3 center() const { return {(x0 + x1) / 2, (y0 + y1) / 2, 0.0}; }
};

using Camera = std::variant<PerspectiveCamera, WindowCamera>;

inline Vec3 camera_position(const Camera& c) {
  return std::visit(
      [](const auto& cam) -> Vec3 {
        if constexpr (std::is_same_v<std::decay_t<decltype(cam)>, WindowCamera>)
          return cam.center();
        else
          return cam.position;
      },
      c);
}

// Inside iff dot(normal, p) + offset >= 0.
struct Plane {
  Vec3 normal;
  double offset = 0.0;

  double signed_distance(const Vec3& p) const { return dot(normal, p) + offset; }
};

struct Frustum {
  std::vector<Plane> planes;

  bool contains(const Vec3& p) const {
    return std::all_of(planes.begin(), planes.end(), [&](const Plane& pl) { return pl.signed_distance(p) >= 0.0; });
  }
};

class CameraError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline Plane unit_plane(const Vec3& n, double offset) {
  const double len = norm(n);
  return {n * (1.0 / len), offset / len};
}

inline Frustum frustum_of(const WindowCamera& w) {
  if (!(w.x1 > w.x0) || !(w.y1 > w.y0)) throw CameraError("window camera has an empty viewport");
  return Frustum{{
      {{1, 0, 0}, -w.x0},
      {{-1, 0, 0}, w.x1},
      {{0, 1, 0}, -w.y0},
      {{0, -1, 0}, w.y1},
  }};
}

inline Frustum frustum_of(const PerspectiveCamera& c) {
  if (!(c.fov_y > 0.0) || !(c.fov_y < std::numbers::pi)) throw CameraError("perspective fov must be in (0, pi)");
  if (!(c.aspect > 0.0)) throw CameraError("perspective aspect must be positive");
  if (!(c.near_depth > 0.0) || !(c.far_depth > c.near_depth)) throw CameraError("need 0 < near < far");
  if (std::abs(c.rotation.det()) < 1e-12) throw CameraError("camera pose is not invertible");

  const double ty = std::tan(c.fov_y / 2);
  const double tx = ty * c.aspect;
  // Camera-frame planes; depth along -z.
  const Plane local[6] = {
      unit_plane({0, 0, -1}, -c.near_depth),  // -z >= near
      unit_plane({0, 0, 1}, c.far_depth),     // -z <= far
      unit_plane({-1, 0, -tx}, 0),            // x <= tx * depth
      unit_plane({1, 0, -tx}, 0),             // x >= -tx * depth
      unit_plane({0, -1, -ty}, 0),
      unit_plane({0, 1, -ty}, 0),
  };
  Frustum f;
  for (const Plane& p : local) {
    const Vec3 n = c.rotation * p.normal;
    f.planes.push_back({n, p.offset - dot(n, c.position)});
  }
  return f;
}

}  // namespace detail

inline Frustum frustum_from_camera(const Camera& c) {
  return std::visit([](const auto& cam) { return detail::frustum_of(cam); }, c);
}

// Culled iff some plane has d < -r; d == -r is kept.
inline bool sphere_visible(const Vec3& center, double radius, const Frustum& f) {
  for (const Plane& p : f.planes)
    if (p.signed_distance(center) < -radius) return false;
  return true;
}

inline bool sphere_visible(const BlockBound& b, const Frustum& f) { return sphere_visible(b.center, b.radius, f); }

struct VisibleBlocks {
  BlockSet all;                      // union over the batch
  std::vector<BlockSet> per_camera;  // one set per camera, same order as the batch
  std::uint64_t sphere_tests = 0;
};

inline BlockSet set_union(const BlockSet& a, const BlockSet& b) {
  BlockSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}
inline BlockSet set_intersection(const BlockSet& a, const BlockSet& b) {
  BlockSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}
inline BlockSet set_difference(const BlockSet& a, const BlockSet& b) {
  BlockSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}
inline bool set_contains(const BlockSet& s, BlockId k) { return std::binary_search(s.begin(), s.end(), k); }

inline VisibleBlocks visible_blocks(std::span<const Frustum> batch, std::span<const BlockBound> bounds) {
  VisibleBlocks out;
  out.per_camera.reserve(batch.size());
  for (const Frustum& f : batch) {
    BlockSet seen;
    for (BlockId k = 0; k < bounds.size(); ++k) {
      ++out.sphere_tests;
      if (sphere_visible(bounds[k], f)) seen.push_back(k);
    }
    out.all = set_union(out.all, seen);
    out.per_camera.push_back(std::move(seen));
  }
  return out;
}

inline VisibleBlocks visible_blocks(std::span<const Camera> batch, std::span<const BlockBound> bounds) {
  std::vector<Frustum> frusta;
  frusta.reserve(batch.size());
  for (const Camera& c : batch) frusta.push_back(frustum_from_camera(c));
  return visible_blocks(std::span<const Frustum>(frusta), bounds);
}

// Level-2 filter: primitives of resident visible blocks whose extent sphere
// passes the same plane test. Result is sorted by primitive id.
inline std::vector<PrimitiveId> fine_filter(const ResidentArena& arena, const BlockSet& visible, const Frustum& f,
                                            const RowLayout& rows) {
  const TableConfig& cfg = arena.config();
  std::vector<PrimitiveId> active;
  for (BlockId k : visible) {
    if (!arena.contains(k)) continue;
    const BlockPayload& p = arena.at(k).payload;
    for (std::uint32_t r = 0; r < cfg.rows_in_block(k); ++r) {
      const float* row = p.row(r, cfg.dim);
      if (sphere_visible(rows.center(row), rows.extent(row), f))
        active.push_back(static_cast<PrimitiveId>(k) * cfg.block_size + r);
    }
  }
  return active;
}

}  // namespace tidal
