#pragma once

// Toy scene files and a synthetic scene generator.
//
// scene.tdsc    "TDSC" | u32 version | u64 n | u32 dim | u32 reserved | n*dim f32
// views.txt     one camera per line: "window x0 y0 x1 y1"; '#' starts a comment
// targets.tdtg  "TDTG" | u32 version | u32 m | u32 width | u32 height | m*h*w*3 f32
// bounds.tdgb   "TDGB" | u32 version | u64 k | k * (cx, cy, cz, radius) f64
//
// Integers and floats are little-endian.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tidal/blocking.hpp"
#include "tidal/splat2d.hpp"
#include "tidal/trainer.hpp"

namespace tidal {

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw SceneError(p.string() + ": cannot open for writing");
  return f;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw SceneError(p.string() + ": cannot open for reading");
  return f;
}

template <typename T>
void put(std::ostream& o, T v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& p) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw SceneError(p.string() + ": unexpected end of file");
  return v;
}

inline void expect_magic(std::istream& in, const char* magic, const std::filesystem::path& p) {
  char m[4];
  if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0)
    throw SceneError(p.string() + ": bad magic, expected " + std::string(magic, 4));
  if (get<std::uint32_t>(in, p) != 1) throw SceneError(p.string() + ": unsupported version");
}

template <typename T>
void read_array(std::istream& in, std::vector<T>& out, std::size_t count, const std::filesystem::path& p) {
  out.resize(count);
  if (count > 0 && !in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * sizeof(T))))
    throw SceneError(p.string() + ": truncated payload");
}

}  // namespace io

struct SceneTable {
  std::uint32_t dim = kToyDim;
  std::vector<float> values;  // n * dim, row-major

  std::uint64_t n() const { return dim == 0 ? 0 : values.size() / dim; }
  const float* row(std::uint64_t i) const { return values.data() + i * dim; }
};

inline void write_scene(const std::filesystem::path& p, const SceneTable& s) {
  auto f = io::open_out(p);
  f.write("TDSC", 4);
  io::put<std::uint32_t>(f, 1);
  io::put<std::uint64_t>(f, s.n());
  io::put<std::uint32_t>(f, s.dim);
  io::put<std::uint32_t>(f, 0);
  f.write(reinterpret_cast<const char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * 4));
  if (!f) throw SceneError(p.string() + ": write failed");
}

inline SceneTable read_scene(const std::filesystem::path& p) {
  auto f = io::open_in(p);
  io::expect_magic(f, "TDSC", p);
  SceneTable s;
  const auto n = io::get<std::uint64_t>(f, p);
  s.dim = io::get<std::uint32_t>(f, p);
  io::get<std::uint32_t>(f, p);
  if (n == 0 || s.dim == 0) throw SceneError(p.string() + ": empty scene");
  io::read_array(f, s.values, n * s.dim, p);
  return s;
}

inline void write_views(const std::filesystem::path& p, const std::vector<WindowCamera>& views) {
  auto f = io::open_out(p);
  f.precision(17);
  for (const WindowCamera& w : views) f << "window " << w.x0 << ' ' << w.y0 << ' ' << w.x1 << ' ' << w.y1 << '\n';
  if (!f) throw SceneError(p.string() + ": write failed");
}

inline std::vector<WindowCamera> read_views(const std::filesystem::path& p) {
  auto f = io::open_in(p);
  std::vector<WindowCamera> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    WindowCamera w;
    if (kind != "window" || !(ls >> w.x0 >> w.y0 >> w.x1 >> w.y1))
      throw SceneError(p.string() + ":" + std::to_string(lineno) + ": expected 'window x0 y0 x1 y1'");
    frustum_from_camera(w);  // rejects empty viewports
    out.push_back(w);
  }
  if (out.empty()) throw SceneError(p.string() + ": no cameras");
  return out;
}

inline void write_targets(const std::filesystem::path& p, const std::vector<Image>& images) {
  if (images.empty()) throw SceneError(p.string() + ": no target images");
  auto f = io::open_out(p);
  f.write("TDTG", 4);
  io::put<std::uint32_t>(f, 1);
  io::put<std::uint32_t>(f, static_cast<std::uint32_t>(images.size()));
  io::put<std::uint32_t>(f, static_cast<std::uint32_t>(images[0].size.width));
  io::put<std::uint32_t>(f, static_cast<std::uint32_t>(images[0].size.height));
  for (const Image& im : images) {
    if (im.size != images[0].size) throw SceneError(p.string() + ": target images differ in size");
    f.write(reinterpret_cast<const char*>(im.rgb.data()), static_cast<std::streamsize>(im.rgb.size() * 4));
  }
  if (!f) throw SceneError(p.string() + ": write failed");
}

inline std::vector<Image> read_targets(const std::filesystem::path& p) {
  auto f = io::open_in(p);
  io::expect_magic(f, "TDTG", p);
  const auto m = io::get<std::uint32_t>(f, p);
  ImageSize size;
  size.width = static_cast<int>(io::get<std::uint32_t>(f, p));
  size.height = static_cast<int>(io::get<std::uint32_t>(f, p));
  if (size.width <= 0 || size.height <= 0) throw SceneError(p.string() + ": empty image size");
  std::vector<Image> out(m);
  for (Image& im : out) {
    im.size = size;
    io::read_array(f, im.rgb, size.values(), p);
  }
  return out;
}

inline void write_bounds(const std::filesystem::path& p, const std::vector<BlockBound>& bounds) {
  auto f = io::open_out(p);
  f.write("TDGB", 4);
  io::put<std::uint32_t>(f, 1);
  io::put<std::uint64_t>(f, bounds.size());
  for (const BlockBound& b : bounds) {
    io::put(f, b.center.x);
    io::put(f, b.center.y);
    io::put(f, b.center.z);
    io::put(f, b.radius);
  }
  if (!f) throw SceneError(p.string() + ": write failed");
}

inline std::vector<BlockBound> read_bounds(const std::filesystem::path& p) {
  auto f = io::open_in(p);
  io::expect_magic(f, "TDGB", p);
  std::vector<BlockBound> out(io::get<std::uint64_t>(f, p));
  for (BlockBound& b : out) {
    b.center.x = io::get<double>(f, p);
    b.center.y = io::get<double>(f, p);
    b.center.z = io::get<double>(f, p);
    b.radius = io::get<double>(f, p);
  }
  return out;
}

// Synthetic toy world: primitives scattered over [0,L]^2 and window cameras
// on a circle around the middle, evenly spaced so consecutive views overlap.
struct SynthConfig {
  std::uint64_t n_primitives = 200;
  std::size_t n_views = 30;
  double world = 4.0;         // L
  double window = 1.2;        // camera window side
  double scale_min = 0.04;    // primitive scale range (world units)
  double scale_max = 0.10;
  double init_jitter = 0.02;  // center noise of the initial guess
  ImageSize image{32, 32};
  std::uint64_t seed = 1;
};

struct SynthScene {
  SceneTable truth;
  SceneTable init;
  std::vector<WindowCamera> views;
  std::vector<Image> targets;
};

inline std::vector<WindowCamera> circle_views(std::size_t m, double world, double window) {
  std::vector<WindowCamera> views;
  const double c = world / 2.0;
  const double r = std::max(0.0, c - window / 2.0 - 0.05 * world);
  for (std::size_t j = 0; j < m; ++j) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m);
    const double cx = c + r * std::cos(a), cy = c + r * std::sin(a);
    views.push_back({cx - window / 2, cy - window / 2, cx + window / 2, cy + window / 2});
  }
  return views;
}

// Renders every primitive of `table` a view can see.
inline Image render_table(const SceneTable& table, const WindowCamera& view, ImageSize size) {
  const RowLayout rows = RowLayout::toy2d();
  const Frustum f = frustum_from_camera(view);
  std::vector<const float*> active;
  for (std::uint64_t i = 0; i < table.n(); ++i)
    if (sphere_visible(rows.center(table.row(i)), rows.extent(table.row(i)), f)) active.push_back(table.row(i));
  return render_rows<float>(active, view, size).image;
}

inline SynthScene synthesize(const SynthConfig& cfg) {
  if (cfg.n_primitives == 0 || cfg.n_views == 0) throw ConfigError("synthetic scene needs primitives and views");
  if (!(cfg.scale_min > 0.0 && cfg.scale_max >= cfg.scale_min)) throw ConfigError("bad primitive scale range");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };

  SynthScene s;
  s.truth.values.reserve(cfg.n_primitives * kToyDim);
  s.init.values.reserve(cfg.n_primitives * kToyDim);
  for (std::uint64_t i = 0; i < cfg.n_primitives; ++i) {
    const double x = uni(0.0, cfg.world), y = uni(0.0, cfg.world);
    const double lsx = std::log(uni(cfg.scale_min, cfg.scale_max)), lsy = std::log(uni(cfg.scale_min, cfg.scale_max));
    const double th = uni(0.0, std::numbers::pi);
    const double r = uni(0.0, 1.0), g = uni(0.0, 1.0), b = uni(0.0, 1.0);
    const double op = uni(-1.0, 1.0);
    for (double v : {x, y, lsx, lsy, th, r, g, b, op}) s.truth.values.push_back(static_cast<float>(v));
    const double jx = x + uni(-cfg.init_jitter, cfg.init_jitter), jy = y + uni(-cfg.init_jitter, cfg.init_jitter);
    for (double v : {jx, jy, lsx, lsy, th, 0.5, 0.5, 0.5, 0.0}) s.init.values.push_back(static_cast<float>(v));
  }
  s.views = circle_views(cfg.n_views, cfg.world, cfg.window);
  for (const WindowCamera& v : s.views) s.targets.push_back(render_table(s.truth, v, cfg.image));
  return s;
}

inline std::vector<Vec3> camera_positions(const std::vector<WindowCamera>& views) {
  std::vector<Vec3> out;
  out.reserve(views.size());
  for (const WindowCamera& w : views) out.push_back(w.center());
  return out;
}

}  // namespace tidal
