#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tidal/param_table.hpp"
#include "tidal/visibility.hpp"

namespace tidal {

// LRU-style recency in [0,1]: reset to 1 on access, multiplied by gamma on
// every update that does not touch the block.
class RecencyTable {
 public:
  explicit RecencyTable(std::size_t k_blocks = 0, double gamma = 0.9) : scores_(k_blocks, 0.0), gamma_(gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("recency decay must be in [0,1]");
  }

  void update(const BlockSet& accessed) {
    auto hit = accessed.begin();
    for (BlockId k = 0; k < scores_.size(); ++k) {
      while (hit != accessed.end() && *hit < k) ++hit;
      if (hit != accessed.end() && *hit == k)
        scores_[k] = 1.0;
      else
        scores_[k] *= gamma_;
    }
    ++updates_;
  }

  double operator[](BlockId k) const { return k < scores_.size() ? scores_[k] : 0.0; }
  double gamma() const { return gamma_; }
  std::uint64_t updates() const { return updates_; }
  std::size_t size() const { return scores_.size(); }

 private:
  std::vector<double> scores_;
  double gamma_;
  std::uint64_t updates_ = 0;
};

inline void update_recency(RecencyTable& table, const BlockSet& accessed) { table.update(accessed); }

inline double score(BlockId k, const BlockSet& next_working, const RecencyTable& recency, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0,1], got " + std::to_string(lambda));
  const double useful = set_contains(next_working, k) ? 1.0 : 0.0;
  return lambda * useful + (1.0 - lambda) * recency[k];
}

struct StreamPlan {
  BlockSet keep;           // R_t and R_{t+1}
  BlockSet stage_in;       // R_{t+1} \ R_t
  BlockSet evict;          // R_t \ R_{t+1}
  BlockSet next_resident;  // R_{t+1}
  BlockSet restage;        // subset of keep that is transferred again anyway (full-restage mode only)
};

inline StreamPlan make_plan(const BlockSet& current, BlockSet next) {
  StreamPlan plan;
  plan.next_resident = std::move(next);
  plan.keep = set_intersection(current, plan.next_resident);
  plan.stage_in = set_difference(plan.next_resident, current);
  plan.evict = set_difference(current, plan.next_resident);
  return plan;
}

struct SchedulerConfig {
  std::size_t capacity = 1;  // C, blocks
  double lambda = 0.7;
  double gamma = 0.9;
  double beta = 0.5;  // share of C reserved for per-camera quotas

  void validate() const {
    if (capacity < 1) throw ConfigError("capacity must be >= 1 block");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0,1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0,1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0,1]");
  }
};

// Camera-balanced Top-C over the pool R_t u K_{t+1}.
//
// Each camera j first gets coverage of q_j = min(|K^(j)|, floor(beta*C/J))
// of its visible blocks (blocks already chosen for an earlier camera count),
// picked by rank; remaining slots go to the pool by rank. Rank: higher s(k),
// then membership in R_t, then lower id.
inline StreamPlan select_residency(std::span<const BlockSet> per_camera, const BlockSet& current,
                                   const RecencyTable& recency, const SchedulerConfig& cfg) {
  cfg.validate();
  BlockSet next_working;
  for (const BlockSet& s : per_camera) next_working = set_union(next_working, s);
  const BlockSet pool = set_union(current, next_working);

  if (pool.size() <= cfg.capacity) return make_plan(current, pool);

  struct Ranked {
    BlockId id;
    double s;
    bool resident;
  };
  auto ranked_of = [&](const BlockSet& ids) {
    std::vector<Ranked> out;
    out.reserve(ids.size());
    for (BlockId k : ids) out.push_back({k, score(k, next_working, recency, cfg.lambda), set_contains(current, k)});
    std::sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) {
      if (a.s != b.s) return a.s > b.s;
      if (a.resident != b.resident) return a.resident;
      return a.id < b.id;
    });
    return out;
  };

  BlockSet chosen;  // kept sorted
  auto pick = [&](BlockId k) {
    auto it = std::lower_bound(chosen.begin(), chosen.end(), k);
    if (it != chosen.end() && *it == k) return false;
    chosen.insert(it, k);
    return true;
  };

  if (!per_camera.empty()) {
    const std::size_t share = static_cast<std::size_t>(std::floor(cfg.beta * static_cast<double>(cfg.capacity) /
                                                                  static_cast<double>(per_camera.size())));
    for (const BlockSet& cam : per_camera) {
      const std::size_t quota = std::min(cam.size(), share);
      std::size_t covered = set_intersection(cam, chosen).size();
      for (const Ranked& r : ranked_of(cam)) {
        if (covered >= quota || chosen.size() >= cfg.capacity) break;
        if (pick(r.id)) ++covered;
      }
    }
  }
  for (const Ranked& r : ranked_of(pool)) {
    if (chosen.size() >= cfg.capacity) break;
    pick(r.id);
  }
  return make_plan(current, std::move(chosen));
}

class WorkingSetExceedsCapacity : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Full-restage plan: every block of K_{t+1} crosses the boundary again,
// resident or not. R_{t+1} is K_{t+1} topped up with the most recently used
// blocks of R_t (ties to lower id) while room remains, with no lookahead.
inline StreamPlan restage_all(std::span<const BlockSet> per_camera, const BlockSet& current,
                              const RecencyTable& recency, std::size_t capacity) {
  BlockSet next_working;
  for (const BlockSet& s : per_camera) next_working = set_union(next_working, s);
  if (next_working.size() > capacity) {
    throw WorkingSetExceedsCapacity("working set exceeds capacity: " + std::to_string(next_working.size()) +
                                    " visible blocks, arena holds " + std::to_string(capacity));
  }
  BlockSet others = set_difference(current, next_working);
  std::stable_sort(others.begin(), others.end(), [&](BlockId a, BlockId b) { return recency[a] > recency[b]; });
  others.resize(std::min(others.size(), capacity - next_working.size()));
  std::sort(others.begin(), others.end());
  StreamPlan plan = make_plan(current, set_union(next_working, others));
  plan.restage = set_intersection(plan.keep, next_working);
  return plan;
}

struct PlanBytes {
  std::uint64_t stage_in = 0;
  std::uint64_t evict = 0;
};

inline PlanBytes plan_bytes(const StreamPlan& plan, const TableConfig& cfg) {
  const std::uint64_t b = block_payload_bytes(cfg);
  return {(plan.stage_in.size() + plan.restage.size()) * b, (plan.evict.size() + plan.restage.size()) * b};
}

}  // namespace tidal
