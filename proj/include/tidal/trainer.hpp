#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tidal/blocking.hpp"
#include "tidal/param_table.hpp"
#include "tidal/resident_arena.hpp"
#include "tidal/splat2d.hpp"
#include "tidal/view_order.hpp"
#include "tidal/visibility.hpp"

namespace tidal {

struct AdamHyper {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Gradients for the active primitives only, ids ascending, `dim` values each.
struct SparseGrads {
  std::uint32_t dim = kToyDim;
  std::vector<PrimitiveId> ids;
  std::vector<double> values;

  const double* row(std::size_t i) const { return values.data() + i * dim; }
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(PrimitiveId id, std::uint32_t coord)
      : std::runtime_error("non-finite gradient at primitive " + std::to_string(id) + ", attribute " +
                           std::to_string(coord)),
        primitive(id),
        attribute(coord) {}
  PrimitiveId primitive;
  std::uint32_t attribute;
};

// One Adam update of a single coordinate. `step` is the block's local step
// counter after incrementing (>= 1).
inline void adam_coordinate(float& theta, float& m, float& v, double g, std::uint64_t step, const AdamHyper& h) {
  const double m1 = h.beta1 * m + (1.0 - h.beta1) * g;
  const double v1 = h.beta2 * v + (1.0 - h.beta2) * g * g;
  m = static_cast<float>(m1);
  v = static_cast<float>(v1);
  const double mhat = static_cast<double>(m) / (1.0 - std::pow(h.beta1, static_cast<double>(step)));
  const double vhat = static_cast<double>(v) / (1.0 - std::pow(h.beta2, static_cast<double>(step)));
  theta = static_cast<float>(static_cast<double>(theta) - h.lr * mhat / (std::sqrt(vhat) + h.eps));
}

struct AdamResult {
  BlockSet dirtied;
  std::uint64_t block_updates = 0;         // (block, step) pairs that received an update
  std::uint64_t cold_restart_updates = 0;  // of those, first updates after a re-admission
};

inline void check_finite(const SparseGrads& grads) {
  for (std::size_t i = 0; i < grads.ids.size(); ++i)
    for (std::uint32_t c = 0; c < grads.dim; ++c)
      if (!std::isfinite(grads.row(i)[c])) throw NonFiniteGradient(grads.ids[i], c);
}

// Adam over the coordinates of active primitives; everything else, including
// moments, stays bit-identical. Every block with an active primitive bumps
// its local step counter once and is marked dirty.
inline AdamResult masked_adam_step(ResidentArena& arena, const SparseGrads& grads, const AdamHyper& hyper) {
  const TableConfig& cfg = arena.config();
  if (grads.dim != cfg.dim) throw ShapeError("gradient width does not match table dimension");
  check_finite(grads);
  for (PrimitiveId id : grads.ids)
    if (!arena.contains(owner_block(id, cfg)))
      throw ArenaError("gradient for primitive " + std::to_string(id) + " whose block is not resident");

  AdamResult out;
  std::size_t i = 0;
  while (i < grads.ids.size()) {
    const BlockId k = owner_block(grads.ids[i], cfg);
    ArenaBlock& blk = arena.at(k);
    ++blk.opt.step;
    ++out.block_updates;
    if (blk.cold_restart_pending) {
      ++out.cold_restart_updates;
      blk.cold_restart_pending = false;
    }
    for (; i < grads.ids.size() && owner_block(grads.ids[i], cfg) == k; ++i) {
      const std::size_t base = static_cast<std::size_t>(grads.ids[i] - static_cast<PrimitiveId>(k) * cfg.block_size) * cfg.dim;
      for (std::uint32_t c = 0; c < cfg.dim; ++c)
        adam_coordinate(blk.payload.values[base + c], blk.opt.m[base + c], blk.opt.v[base + c], grads.row(i)[c],
                        blk.opt.step, hyper);
    }
    blk.dirty = true;
    out.dirtied.push_back(k);
  }
  return out;
}

struct TrainView {
  WindowCamera camera;
  const Image* target = nullptr;
};

struct StepOutput {
  double loss = 0.0;
  SparseGrads grads;
  std::uint32_t skipped_degenerate = 0;
};

using ActiveRows = std::vector<std::pair<PrimitiveId, const float*>>;

// Mean loss and gradient over a camera batch. `rows_for(j)` yields the
// contributing primitives of view j, ascending by id.
inline StepOutput batch_loss_and_grads(std::span<const TrainView> batch,
                                       const std::function<ActiveRows(std::size_t)>& rows_for) {
  StepOutput out;
  std::map<PrimitiveId, ToyGrad> acc;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const ActiveRows active = rows_for(j);
    std::vector<const float*> rows;
    rows.reserve(active.size());
    for (const auto& [id, row] : active) rows.push_back(row);
    const LossAndGrads lg = loss_and_grads<float>(rows, batch[j].camera, *batch[j].target);
    out.loss += lg.loss;
    out.skipped_degenerate += lg.skipped_degenerate;
    for (std::size_t i = 0; i < active.size(); ++i) {
      ToyGrad& g = acc[active[i].first];
      for (std::uint32_t c = 0; c < kToyDim; ++c) g[c] += lg.grads[i][c];
    }
  }
  const double inv = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  out.grads.ids.reserve(acc.size());
  out.grads.values.reserve(acc.size() * kToyDim);
  for (const auto& [id, g] : acc) {
    out.grads.ids.push_back(id);
    for (double v : g) out.grads.values.push_back(v * inv);
  }
  return out;
}

struct ComputeResult {
  double loss = 0.0;
  AdamResult adam;
  std::vector<PrimitiveId> active;  // I_t, ascending
};

// One training step over the resident arena: fine filter, render, backprop
// and masked Adam, then grow the bounds of the blocks that moved.
inline ComputeResult toy_compute(ResidentArena& arena, const VisibleBlocks& visible, std::span<const TrainView> batch,
                                 std::vector<BlockBound>& bounds, const AdamHyper& hyper) {
  const TableConfig& cfg = arena.config();
  const RowLayout rows = RowLayout::toy2d();
  auto rows_for = [&](std::size_t j) {
    const Frustum f = frustum_from_camera(batch[j].camera);
    ActiveRows out;
    for (PrimitiveId id : fine_filter(arena, visible.per_camera[j], f, rows)) {
      const BlockId k = owner_block(id, cfg);
      out.emplace_back(id, arena.at(k).payload.row(static_cast<std::uint32_t>(id - std::uint64_t{k} * cfg.block_size),
                                                   cfg.dim));
    }
    return out;
  };
  const StepOutput step = batch_loss_and_grads(batch, rows_for);

  ComputeResult out;
  out.loss = step.loss;
  out.active = step.grads.ids;
  out.adam = masked_adam_step(arena, step.grads, hyper);

  std::vector<Vec3> centers;
  std::vector<double> extents;
  for (BlockId k : out.adam.dirtied) {
    centers.clear();
    extents.clear();
    const BlockPayload& p = arena.at(k).payload;
    for (std::uint32_t r = 0; r < cfg.rows_in_block(k); ++r) {
      centers.push_back(rows.center(p.row(r, cfg.dim)));
      extents.push_back(rows.extent(p.row(r, cfg.dim)));
    }
    bounds[k] = refresh_bound(bounds[k], centers, extents);
  }
  return out;
}

// Monolithic in-memory trainer with the same optimizer semantics (per-block
// step counters, masked Adam) and a brute-force visibility test over every
// primitive. Used as the transparency oracle for the out-of-core path.
class ReferenceTrainer {
 public:
  ReferenceTrainer(const TableConfig& cfg, std::vector<float> table, AdamHyper hyper = {})
      : cfg_(cfg), table_(std::move(table)), m_(table_.size(), 0.0f), v_(table_.size(), 0.0f),
        steps_(cfg.k_blocks(), 0), hyper_(hyper) {
    if (cfg_.dim != kToyDim) throw ConfigError("reference trainer needs the 9-wide toy layout");
    if (table_.size() != cfg_.n_primitives * cfg_.dim) throw ConfigError("table size mismatch");
  }

  double step(std::span<const TrainView> batch) {
    const RowLayout rows = RowLayout::toy2d();
    auto rows_for = [&](std::size_t j) {
      const Frustum f = frustum_from_camera(batch[j].camera);
      ActiveRows out;
      for (PrimitiveId i = 0; i < cfg_.n_primitives; ++i) {
        const float* row = table_.data() + i * cfg_.dim;
        if (sphere_visible(rows.center(row), rows.extent(row), f)) out.emplace_back(i, row);
      }
      return out;
    };
    const StepOutput s = batch_loss_and_grads(batch, rows_for);
    check_finite(s.grads);
    std::size_t i = 0;
    while (i < s.grads.ids.size()) {
      const BlockId k = owner_block(s.grads.ids[i], cfg_);
      const std::uint64_t step = ++steps_[k];
      for (; i < s.grads.ids.size() && owner_block(s.grads.ids[i], cfg_) == k; ++i) {
        const std::size_t base = static_cast<std::size_t>(s.grads.ids[i]) * cfg_.dim;
        for (std::uint32_t c = 0; c < cfg_.dim; ++c)
          adam_coordinate(table_[base + c], m_[base + c], v_[base + c], s.grads.row(i)[c], step, hyper_);
      }
    }
    return s.loss;
  }

  const std::vector<float>& table() const { return table_; }

 private:
  TableConfig cfg_;
  std::vector<float> table_;
  std::vector<float> m_;
  std::vector<float> v_;
  std::vector<std::uint64_t> steps_;
  AdamHyper hyper_;
};

// Gradient of one view at a dense parameter table, restricted to the
// primitives that pass the view's visibility test.
inline SparseGrads view_gradient(const TableConfig& cfg, std::span<const float> table, const TrainView& view) {
  const RowLayout rows = RowLayout::toy2d();
  const Frustum f = frustum_from_camera(view.camera);
  auto rows_for = [&](std::size_t) {
    ActiveRows out;
    for (PrimitiveId i = 0; i < cfg.n_primitives; ++i) {
      const float* row = table.data() + i * cfg.dim;
      if (sphere_visible(rows.center(row), rows.extent(row), f)) out.emplace_back(i, row);
    }
    return out;
  };
  return batch_loss_and_grads(std::span<const TrainView>(&view, 1), rows_for).grads;
}

// Squared distance between two sparse gradients over the union of their
// supports.
inline double sparse_sq_distance(const SparseGrads& a, const SparseGrads& b) {
  double acc = 0.0;
  std::size_t i = 0, j = 0;
  auto add = [&](const double* ra, const double* rb, std::uint32_t dim) {
    for (std::uint32_t c = 0; c < dim; ++c) {
      const double d = (ra ? ra[c] : 0.0) - (rb ? rb[c] : 0.0);
      acc += d * d;
    }
  };
  while (i < a.ids.size() || j < b.ids.size()) {
    if (j == b.ids.size() || (i < a.ids.size() && a.ids[i] < b.ids[j])) {
      add(a.row(i++), nullptr, a.dim);
    } else if (i == a.ids.size() || b.ids[j] < a.ids[i]) {
      add(nullptr, b.row(j++), b.dim);
    } else {
      add(a.row(i++), b.row(j++), a.dim);
    }
  }
  return acc;
}

// Sum over consecutive view pairs of || grad f_{pi_t}(theta_t) -
// grad f_{pi_{t+1}}(theta_t) ||^2 on the active coordinates of both views.
// `theta_at(t)` supplies the parameters for step t; `grad(view, theta)` the
// sparse view gradient.
template <typename ThetaAt, typename GradFn>
double gradient_variation(const ViewOrder& order, ThetaAt&& theta_at, GradFn&& grad) {
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < order.permutation.size(); ++t) {
    const auto& theta = theta_at(t);
    total += sparse_sq_distance(grad(order.permutation[t], theta), grad(order.permutation[t + 1], theta));
  }
  return total;
}

// Mean PSNR over views, rendering every primitive the view can see.
inline double mean_psnr(const TableConfig& cfg, std::span<const float> table, std::span<const WindowCamera> views,
                        std::span<const Image> targets) {
  const RowLayout rows = RowLayout::toy2d();
  double total = 0.0;
  for (std::size_t j = 0; j < views.size(); ++j) {
    const Frustum f = frustum_from_camera(views[j]);
    std::vector<const float*> active;
    for (PrimitiveId i = 0; i < cfg.n_primitives; ++i) {
      const float* row = table.data() + i * cfg.dim;
      if (sphere_visible(rows.center(row), rows.extent(row), f)) active.push_back(row);
    }
    const RenderResult r = render_rows<float>(active, views[j], targets[j].size);
    total += psnr(image_mse(r.image, targets[j]));
  }
  return views.empty() ? 0.0 : total / static_cast<double>(views.size());
}

}  // namespace tidal
