#pragma once

// Desk-scale differentiable splatter over D=9 rows:
//   x, y, log sx, log sy, theta, r, g, b, opacity logit
// Additive compositing, I(p) = clamp01(sum_i o_i c_i G(m_i(p)^2)) with
// G(q) = exp(-q/2) * w(q). The window w is 1 up to q = 8 and falls to 0 at
// q = 9 (Mahalanobis radius 3) with a cubic smoothstep, so a primitive never
// contributes outside its 3*max(scale) extent sphere and the loss stays C1 in
// the geometry parameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tidal/visibility.hpp"

namespace tidal {

inline constexpr std::uint32_t kToyDim = 9;

namespace col {
inline constexpr int x = 0, y = 1, log_sx = 2, log_sy = 3, theta = 4, r = 5, g = 6, b = 7, opacity = 8;
}

inline constexpr double kCutoffSq = 9.0;
inline constexpr double kTaperStartSq = 8.0;

struct Footprint {
  double g;   // G(q)
  double dg;  // dG/dq
};

inline Footprint footprint_weight(double q) {
  if (q >= kCutoffSq) return {0.0, 0.0};
  const double e = std::exp(-0.5 * q);
  if (q <= kTaperStartSq) return {e, -0.5 * e};
  const double t = q - kTaperStartSq;
  const double w = 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
  const double dw = -30.0 * t * t * (1.0 - t) * (1.0 - t);
  return {e * w, -0.5 * e * w + e * dw};
}

using ToyGrad = std::array<double, kToyDim>;

struct ImageSize {
  int width = 32;
  int height = 32;
  bool operator==(const ImageSize&) const = default;
  std::size_t values() const { return static_cast<std::size_t>(width) * height * 3; }
};

// Row-major H x W x 3.
struct Image {
  ImageSize size;
  std::vector<float> rgb;

  static Image black(ImageSize s) { return {s, std::vector<float>(s.values(), 0.0f)}; }
  float at(int px, int py, int ch) const { return rgb[(static_cast<std::size_t>(py) * size.width + px) * 3 + ch]; }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// World position of a pixel center.
inline Vec3 pixel_center(const WindowCamera& w, ImageSize s, int px, int py) {
  return {w.x0 + (px + 0.5) * (w.x1 - w.x0) / s.width, w.y0 + (py + 0.5) * (w.y1 - w.y0) / s.height, 0.0};
}

namespace detail {

struct Decoded {
  double mx, my, sx, sy, cs, sn, o;
  double c[3];
  bool ok;
};

template <typename T>
Decoded decode(const T* row) {
  Decoded d{};
  for (std::uint32_t j = 0; j < kToyDim; ++j)
    if (!std::isfinite(static_cast<double>(row[j]))) return d;
  d.mx = row[col::x];
  d.my = row[col::y];
  d.sx = std::exp(static_cast<double>(row[col::log_sx]));
  d.sy = std::exp(static_cast<double>(row[col::log_sy]));
  d.cs = std::cos(static_cast<double>(row[col::theta]));
  d.sn = std::sin(static_cast<double>(row[col::theta]));
  d.o = sigmoid(row[col::opacity]);
  for (int ch = 0; ch < 3; ++ch) d.c[ch] = row[col::r + ch];
  d.ok = d.sx > 1e-12 && d.sy > 1e-12 && std::isfinite(d.sx) && std::isfinite(d.sy);
  return d;
}

// Pixel index range that can fall inside the truncated footprint.
struct PixelBox {
  int px0, px1, py0, py1;  // inclusive-exclusive
};

inline PixelBox footprint(const Decoded& d, const WindowCamera& w, ImageSize s) {
  const double ext = 3.0 * std::max(d.sx, d.sy);
  const double dx = (w.x1 - w.x0) / s.width, dy = (w.y1 - w.y0) / s.height;
  auto lo = [](double v, int n) { return std::clamp(static_cast<int>(std::floor(v)) - 1, 0, n); };
  auto hi = [](double v, int n) { return std::clamp(static_cast<int>(std::ceil(v)) + 1, 0, n); };
  return {lo((d.mx - ext - w.x0) / dx - 0.5, s.width), hi((d.mx + ext - w.x0) / dx - 0.5, s.width),
          lo((d.my - ext - w.y0) / dy - 0.5, s.height), hi((d.my + ext - w.y0) / dy - 0.5, s.height)};
}

struct Local {
  double u, v, m2;
};

inline Local local_coords(const Decoded& d, const Vec3& p) {
  const double dx = p.x - d.mx, dy = p.y - d.my;
  const double u = d.cs * dx + d.sn * dy;
  const double v = -d.sn * dx + d.cs * dy;
  return {u, v, (u / d.sx) * (u / d.sx) + (v / d.sy) * (v / d.sy)};
}

}  // namespace detail

struct RenderResult {
  std::vector<double> sum;  // unclamped channel sums, H x W x 3
  Image image;
  std::uint32_t skipped_degenerate = 0;
};

// Renders the listed rows in list order (order fixes the summation order).
template <typename T>
RenderResult render_rows(std::span<const T* const> rows, const WindowCamera& view, ImageSize size) {
  if (size.width <= 0 || size.height <= 0) throw ShapeError("render: empty image size");
  RenderResult out;
  out.sum.assign(size.values(), 0.0);
  for (const T* row : rows) {
    const detail::Decoded d = detail::decode(row);
    if (!d.ok) {
      ++out.skipped_degenerate;
      continue;
    }
    const detail::PixelBox box = detail::footprint(d, view, size);
    for (int py = box.py0; py < box.py1; ++py) {
      for (int px = box.px0; px < box.px1; ++px) {
        const detail::Local l = detail::local_coords(d, pixel_center(view, size, px, py));
        const double g = footprint_weight(l.m2).g;
        if (g == 0.0) continue;
        double* s = &out.sum[(static_cast<std::size_t>(py) * size.width + px) * 3];
        for (int ch = 0; ch < 3; ++ch) s[ch] += d.o * d.c[ch] * g;
      }
    }
  }
  out.image.size = size;
  out.image.rgb.resize(size.values());
  for (std::size_t i = 0; i < out.sum.size(); ++i) out.image.rgb[i] = static_cast<float>(std::clamp(out.sum[i], 0.0, 1.0));
  return out;
}

struct LossAndGrads {
  double loss = 0.0;
  std::vector<ToyGrad> grads;  // parallel to the input rows
  std::uint32_t skipped_degenerate = 0;
};

// Mean squared error over all pixels and channels, with analytic gradients
// for every listed row.
template <typename T>
LossAndGrads loss_and_grads(std::span<const T* const> rows, const WindowCamera& view, const Image& target) {
  if (target.rgb.size() != target.size.values()) throw ShapeError("loss: malformed target image");
  const ImageSize size = target.size;
  const RenderResult r = render_rows(rows, view, size);

  LossAndGrads out;
  out.skipped_degenerate = r.skipped_degenerate;
  out.grads.assign(rows.size(), ToyGrad{});
  const double norm = 1.0 / static_cast<double>(size.values());
  std::vector<double> dsum(size.values(), 0.0);  // dLoss / dSum
  for (std::size_t i = 0; i < dsum.size(); ++i) {
    const double img = std::clamp(r.sum[i], 0.0, 1.0);
    const double diff = img - static_cast<double>(target.rgb[i]);
    out.loss += diff * diff;
    if (r.sum[i] > 0.0 && r.sum[i] < 1.0) dsum[i] = 2.0 * diff * norm;
  }
  out.loss *= norm;

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const detail::Decoded d = detail::decode(rows[i]);
    if (!d.ok) continue;
    ToyGrad& gr = out.grads[i];
    const detail::PixelBox box = detail::footprint(d, view, size);
    for (int py = box.py0; py < box.py1; ++py) {
      for (int px = box.px0; px < box.px1; ++px) {
        const detail::Local l = detail::local_coords(d, pixel_center(view, size, px, py));
        const Footprint fw = footprint_weight(l.m2);
        if (fw.g == 0.0) continue;
        const double g = fw.g;
        const double* ds = &dsum[(static_cast<std::size_t>(py) * size.width + px) * 3];
        double dg = 0.0;  // dLoss / dG
        double dop = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          gr[col::r + ch] += ds[ch] * d.o * g;
          dg += ds[ch] * d.o * d.c[ch];
          dop += ds[ch] * d.c[ch] * g;
        }
        gr[col::opacity] += dop * d.o * (1.0 - d.o);
        if (dg == 0.0) continue;
        const double dm2 = fw.dg * dg;  // dLoss / d(m^2)
        const double isx2 = 1.0 / (d.sx * d.sx), isy2 = 1.0 / (d.sy * d.sy);
        const double du = dm2 * 2.0 * l.u * isx2;
        const double dv = dm2 * 2.0 * l.v * isy2;
        // u = c dx + s dy, v = -s dx + c dy, dx = px - mx
        gr[col::x] += -(du * d.cs - dv * d.sn);
        gr[col::y] += -(du * d.sn + dv * d.cs);
        gr[col::log_sx] += dm2 * (-2.0 * l.u * l.u * isx2);
        gr[col::log_sy] += dm2 * (-2.0 * l.v * l.v * isy2);
        gr[col::theta] += du * l.v - dv * l.u;
      }
    }
  }
  return out;
}

inline double psnr(double mse) {
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

inline double image_mse(const Image& a, const Image& b) {
  if (a.size != b.size || a.rgb.size() != b.rgb.size()) throw ShapeError("mse: image size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - b.rgb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.rgb.size());
}

}  // namespace tidal
