#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "tidal/resident_arena.hpp"
#include "tidal/visibility.hpp"

using namespace tidal;

namespace {

PerspectiveCamera identity_camera() {
  PerspectiveCamera c;
  c.fov_y = std::numbers::pi / 2;
  c.aspect = 1.0;
  c.near_depth = 0.1;
  c.far_depth = 100.0;
  return c;
}

// Exact membership for the perspective camera, written from the projection
// definition rather than from planes.
bool projects_inside(const PerspectiveCamera& c, const Vec3& world) {
  const Vec3 p = c.rotation.transposed() * (world - c.position);
  const double depth = -p.z;
  if (depth < c.near_depth || depth > c.far_depth) return false;
  const double ty = std::tan(c.fov_y / 2), tx = ty * c.aspect;
  return std::abs(p.x) <= tx * depth && std::abs(p.y) <= ty * depth;
}

}  // namespace

TEST(Frustum, PerspectiveExamples) {
  const Frustum f = frustum_from_camera(identity_camera());
  EXPECT_EQ(f.planes.size(), 6u);
  for (const Plane& p : f.planes) EXPECT_NEAR(norm(p.normal), 1.0, 1e-12);
  EXPECT_TRUE(f.contains({0, 0, -1}));
  EXPECT_FALSE(f.contains({0, 0, 1}));
}

TEST(Frustum, WindowExamples) {
  const Frustum f = frustum_from_camera(WindowCamera{0, 0, 10, 10});
  EXPECT_EQ(f.planes.size(), 4u);
  EXPECT_TRUE(f.contains({5, 5, 0}));
  EXPECT_FALSE(f.contains({11, 5, 0}));
}

TEST(Frustum, DegenerateCamerasThrow) {
  PerspectiveCamera c = identity_camera();
  c.near_depth = 5;
  c.far_depth = 1;
  EXPECT_THROW(frustum_from_camera(c), CameraError);
  c = identity_camera();
  c.fov_y = 0;
  EXPECT_THROW(frustum_from_camera(c), CameraError);
  c = identity_camera();
  c.rotation = Mat3{};
  for (auto& row : c.rotation.m)
    for (double& v : row) v = 0.0;
  EXPECT_THROW(frustum_from_camera(c), CameraError);
  EXPECT_THROW(frustum_from_camera(WindowCamera{1, 0, 1, 5}), CameraError);
}

TEST(Frustum, PlanesMatchProjectionDefinition) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1), ang(-3, 3);
  for (int cam = 0; cam < 20; ++cam) {
    PerspectiveCamera c = identity_camera();
    c.rotation = Mat3::rotation_y(ang(rng));
    c.position = {u(rng) * 3, u(rng) * 3, u(rng) * 3};
    c.aspect = 1.5;
    c.far_depth = 20;
    const Frustum f = frustum_from_camera(c);
    for (int i = 0; i < 2000; ++i) {
      const Vec3 p{u(rng) * 20, u(rng) * 20, u(rng) * 20};
      const bool a = f.contains(p), b = projects_inside(c, p);
      // Ignore points within rounding distance of a face.
      double margin = 1e9;
      for (const Plane& pl : f.planes) margin = std::min(margin, std::abs(pl.signed_distance(p)));
      if (margin > 1e-9) ASSERT_EQ(a, b);
    }
  }
}

TEST(SphereVisible, CenteredSphereAlwaysVisible) {
  const Frustum f = frustum_from_camera(WindowCamera{0, 0, 10, 10});
  for (double r : {0.0, 0.5, 100.0}) EXPECT_TRUE(sphere_visible(BlockBound{{5, 5, 0}, r}, f));
}

TEST(SphereVisible, BoundaryIsKept) {
  const Frustum f = frustum_from_camera(WindowCamera{0, 0, 10, 10});
  // Distance to the x >= 0 plane is exactly -2 with radius 2.
  EXPECT_TRUE(sphere_visible(BlockBound{{-2, 5, 0}, 2.0}, f));
  EXPECT_FALSE(sphere_visible(BlockBound{{-2, 5, 0}, std::nextafter(2.0, 0.0)}, f));
}

TEST(SphereVisible, NeverRejectsIntersectingSphere) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1), pos(-15, 15), rad(0, 3);
  PerspectiveCamera c = identity_camera();
  c.far_depth = 10;
  const Frustum f = frustum_from_camera(c);
  int intersecting = 0;
  for (int i = 0; i < 1000; ++i) {
    const BlockBound b{{pos(rng), pos(rng), pos(rng) - 5}, rad(rng)};
    bool hit = f.contains(b.center);
    for (int s = 0; s < 4000 && !hit; ++s) {
      Vec3 d{u(rng), u(rng), u(rng)};
      if (norm(d) > 1 || norm(d) == 0) continue;
      hit = f.contains(b.center + d * b.radius);
    }
    if (hit) {
      ++intersecting;
      ASSERT_TRUE(sphere_visible(b, f)) << "sphere " << i;
    }
  }
  EXPECT_GT(intersecting, 50);
}

TEST(VisibleBlocks, Examples) {
  const std::vector<BlockBound> bounds{{{0.5, 0.5, 0}, 0.1}, {{1.5, 0.5, 0}, 0.1}, {{2.5, 0.5, 0}, 0.1}};
  EXPECT_TRUE(visible_blocks(std::vector<Camera>{}, bounds).all.empty());

  const auto all = visible_blocks(std::vector<Camera>{WindowCamera{0, 0, 3, 1}}, bounds);
  EXPECT_EQ(all.all, (BlockSet{0, 1, 2}));

  const auto two = visible_blocks(std::vector<Camera>{WindowCamera{0, 0, 1.95, 1}, WindowCamera{1.05, 0, 3, 1}}, bounds);
  EXPECT_EQ(two.per_camera[0], (BlockSet{0, 1}));
  EXPECT_EQ(two.per_camera[1], (BlockSet{1, 2}));
  EXPECT_EQ(two.all, (BlockSet{0, 1, 2}));
  EXPECT_EQ(two.sphere_tests, 6u);  // K * |batch|
}

namespace {

ResidentArena arena_with(const TableConfig& cfg, const std::vector<std::array<float, 4>>& rows) {
  ResidentArena a(cfg, cfg.k_blocks());
  std::vector<float> table;
  for (const auto& r : rows) table.insert(table.end(), r.begin(), r.end());
  for (auto& b : split_into_blocks(table, cfg)) a.admit(std::move(b), false);
  return a;
}

}  // namespace

TEST(FineFilter, BlockVisibleButPrimitivesOutside) {
  // Rows: x, y, log sx, log sy with extents 3*exp(-3) ~ 0.15.
  const TableConfig cfg = TableConfig::make(2, 4, 2);
  const ResidentArena a = arena_with(cfg, {{{-3, 0.5, -3, -3}}, {{13, 0.5, -3, -3}}});
  const Frustum f = frustum_from_camera(WindowCamera{0, 0, 10, 1});
  EXPECT_TRUE(fine_filter(a, {0}, f, RowLayout::toy2d()).empty());
}

TEST(FineFilter, AllInside) {
  const TableConfig cfg = TableConfig::make(3, 4, 4);
  const ResidentArena a = arena_with(cfg, {{{1, 0.5, -3, -3}}, {{2, 0.5, -3, -3}}, {{3, 0.5, -3, -3}}});
  const Frustum f = frustum_from_camera(WindowCamera{0, 0, 10, 1});
  EXPECT_EQ(fine_filter(a, {0}, f, RowLayout::toy2d()), (std::vector<PrimitiveId>{0, 1, 2}));
}

TEST(FineFilter, MatchesBruteForceOverResidentVisibleBlocks) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> pos(0, 10), ls(-4, -1);
  const TableConfig cfg = TableConfig::make(500, 4, 16);
  std::vector<std::array<float, 4>> rows;
  for (int i = 0; i < 500; ++i) rows.push_back({pos(rng), pos(rng), ls(rng), ls(rng)});
  ResidentArena full = arena_with(cfg, rows);
  // Keep every other block resident.
  for (BlockId k = 1; k < cfg.k_blocks(); k += 2) full.evict(k);
  const RowLayout layout = RowLayout::toy2d();
  for (int c = 0; c < 50; ++c) {
    const double x = pos(rng), y = pos(rng);
    const Frustum f = frustum_from_camera(WindowCamera{x, y, x + 2, y + 2});
    BlockSet visible;
    for (BlockId k = 0; k < cfg.k_blocks(); k += 3) visible.push_back(k);
    std::vector<PrimitiveId> expect;
    for (PrimitiveId i = 0; i < 500; ++i) {
      const BlockId k = owner_block(i, cfg);
      if (!set_contains(visible, k) || !full.contains(k)) continue;
      const auto& r = rows[i];
      const double ext = 3.0 * std::max(std::exp(double(r[2])), std::exp(double(r[3])));
      bool culled = false;
      for (const Plane& p : f.planes) culled = culled || p.signed_distance({r[0], r[1], 0}) < -ext;
      if (!culled) expect.push_back(i);
    }
    EXPECT_EQ(fine_filter(full, visible, f, layout), expect);
  }
}
