#pragma once

// Out-of-core training loop over three tiers: log store, host cache and a
// bounded resident arena. Each iteration identifies the visible blocks,
// plans the next resident set, prefetches the blocks it adds, computes on
// the current arena and commits the plan at the boundary.

#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tidal/blocking.hpp"
#include "tidal/host_cache.hpp"
#include "tidal/log_store.hpp"
#include "tidal/resident_arena.hpp"
#include "tidal/tide_scheduler.hpp"
#include "tidal/trainer.hpp"
#include "tidal/visibility.hpp"
#include "tidal/worker.hpp"

namespace tidal {

struct PipelineConfig {
  SchedulerConfig scheduler;  // scheduler.capacity is the arena size C
  bool overlap = true;        // off: prefetch, compute and flush run back to back
  bool tide = true;           // off: every block of K_{t+1} is restaged each iteration
  std::size_t queue_limit = 8;
};

// One camera batch: the frusta used for block identification and an opaque
// tag handed to the compute callback.
struct IterationInput {
  std::vector<Frustum> frusta;
  std::size_t tag = 0;
};

struct ComputeOutcome {
  double loss = 0.0;
  AdamResult adam;
};

// Runs forward, backward and the optimizer step on the arena. May grow
// `bounds` for blocks it moved.
using ComputeFn =
    std::function<ComputeOutcome(ResidentArena&, const VisibleBlocks&, std::size_t tag, std::vector<BlockBound>& bounds)>;

struct IterationStats {
  std::uint64_t iter = 0;
  std::uint64_t stage_in_bytes = 0;
  std::uint64_t evict_bytes = 0;
  std::uint64_t ssd_read_bytes = 0;
  std::uint64_t ssd_write_bytes = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t readmissions = 0;
  std::uint64_t cold_restart_updates = 0;
  std::uint64_t total_updates = 0;
  double wait_ms = 0.0;
  double compute_ms = 0.0;
  double wall_ms = 0.0;
  double loss = 0.0;
  std::uint64_t resident_blocks = 0;        // |R_t| during compute
  std::uint64_t admissions = 0;             // blocks that became resident at this boundary
  std::uint64_t completed_streak_iters = 0;  // summed lengths of the residencies that ended here
};

struct ChurnCounters {
  std::uint64_t admissions = 0;
  std::uint64_t evictions = 0;
  std::uint64_t readmissions = 0;
  std::uint64_t completed_streaks = 0;
  std::uint64_t completed_streak_iters = 0;
};

class Pipeline {
 public:
  Pipeline(LogStore& store, HostCache& cache, std::vector<BlockBound> bounds, const PipelineConfig& cfg,
           ComputeFn compute)
      : store_(store),
        cache_(cache),
        cfg_(cfg),
        arena_(store.config(), cfg.scheduler.capacity),
        bounds_(std::move(bounds)),
        recency_(store.config().k_blocks(), cfg.scheduler.gamma),
        compute_(std::move(compute)),
        ever_evicted_(store.config().k_blocks(), false),
        admitted_at_(store.config().k_blocks(), 0) {
    cfg_.scheduler.validate();
    if (bounds_.size() != store.config().k_blocks()) throw ConfigError("one bound per block required");
    if (cfg_.overlap) {
      prefetcher_ = std::make_unique<Worker>(cfg_.queue_limit);
      flusher_ = std::make_unique<Worker>(cfg_.queue_limit);
      cache_.set_sink([this](std::vector<FlushJob> jobs) {
        flusher_->submit([this, jobs = std::move(jobs)]() mutable {
          try {
            cache_.execute(std::move(jobs));
          } catch (...) {
            std::lock_guard lock(error_mu_);
            if (!flush_error_) flush_error_ = std::current_exception();
          }
        });
      });
    } else {
      cache_.set_sink([this](std::vector<FlushJob> jobs) { cache_.execute(std::move(jobs)); });
    }
  }

  ~Pipeline() {
    if (flusher_) {
      flusher_->drain();
      cache_.set_sink([this](std::vector<FlushJob> jobs) { cache_.execute(std::move(jobs)); });
    }
  }

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const ResidentArena& arena() const { return arena_; }
  ResidentArena& arena() { return arena_; }
  const std::vector<BlockBound>& bounds() const { return bounds_; }
  const ChurnCounters& churn() const { return churn_; }
  std::uint64_t iteration() const { return iter_; }
  const PipelineConfig& config() const { return cfg_; }

  IterationStats run_iteration(const IterationInput& cur, const IterationInput& next) {
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();
    rethrow_flush_error();
    const CacheStats cache_before = cache_.stats();
    const std::uint64_t bb = block_payload_bytes(store_.config());

    IterationStats st;
    st.iter = iter_;
    double wait_ms = 0.0;

    // Identify K_t. Blocks the plan did not bring in (first iteration, or
    // bounds that grew since planning) are staged on demand while there is
    // room; the stall is exposed wait.
    const VisibleBlocks vis = visible_blocks(std::span<const Frustum>(cur.frusta), bounds_);
    {
      BlockSet want;
      if (arena_.size() == 0) {
        want = cfg_.tide ? select_residency(vis.per_camera, {}, recency_, cfg_.scheduler).next_resident
                         : restage_all(vis.per_camera, {}, recency_, arena_.capacity()).next_resident;
      } else {
        want = set_difference(vis.all, arena_.resident());
      }
      const auto t0 = clock::now();
      for (BlockId k : want) {
        if (arena_.full() || arena_.contains(k)) continue;
        admit(cache_.get(k), iter_);
        st.stage_in_bytes += bb;
        ++st.admissions;
      }
      wait_ms += ms_since(t0);
    }

    // Plan R_{t+1} from batch t+1 with the bounds as they stand now.
    const BlockSet resident = arena_.resident();
    recency_.update(set_intersection(resident, vis.all));
    const VisibleBlocks vis_next = visible_blocks(std::span<const Frustum>(next.frusta), bounds_);
    const StreamPlan plan = cfg_.tide ? select_residency(vis_next.per_camera, resident, recency_, cfg_.scheduler)
                                      : restage_all(vis_next.per_camera, resident, recency_, arena_.capacity());

    // Prefetch S+ into the staging buffer.
    std::vector<BlockPayload> staging;
    auto prefetch = [this, &plan, &staging] {
      staging.reserve(plan.stage_in.size());
      for (BlockId k : plan.stage_in) staging.push_back(cache_.get(k));
    };
    std::future<void> pending;
    if (cfg_.overlap) pending = prefetcher_->submit(prefetch);

    st.resident_blocks = arena_.size();
    const auto t_compute = clock::now();
    ComputeOutcome out;
    try {
      out = compute_(arena_, vis, cur.tag, bounds_);
    } catch (...) {
      if (pending.valid()) pending.wait();
      throw;
    }
    st.compute_ms = ms_since(t_compute);
    st.loss = out.loss;
    st.total_updates = out.adam.block_updates;
    st.cold_restart_updates = out.adam.cold_restart_updates;

    // Staging must be complete before the boundary; a failure leaves the
    // arena membership untouched.
    const auto t_wait = clock::now();
    if (cfg_.overlap) {
      pending.get();
    } else {
      prefetch();
    }
    wait_ms += ms_since(t_wait);

    // Commit: S- leaves through the host cache, restaged blocks make the
    // round trip and keep their state, then S+ is admitted.
    for (BlockId k : plan.evict) {
      st.completed_streak_iters += evict_before(k, iter_ + 1);
      ++st.evictions;
    }
    for (BlockId k : plan.restage) restage_block(k);
    for (BlockPayload& p : staging) {
      if (ever_evicted_[p.block_id]) ++st.readmissions;
      admit(std::move(p), iter_ + 1);
      ++st.admissions;
    }
    if (!cfg_.overlap) rethrow_flush_error();

    const PlanBytes pb = plan_bytes(plan, store_.config());
    st.stage_in_bytes += pb.stage_in;
    st.evict_bytes = pb.evict;

    const CacheStats cache_after = cache_.stats();
    st.cache_hits = cache_after.hits - cache_before.hits;
    st.cache_misses = cache_after.misses - cache_before.misses;
    st.ssd_read_bytes = cache_after.miss_bytes - cache_before.miss_bytes;
    st.ssd_write_bytes = cache_after.flush_bytes - cache_before.flush_bytes;
    st.wait_ms = wait_ms;
    st.wall_ms = ms_since(t_start);

    churn_.admissions += st.admissions;
    churn_.readmissions += st.readmissions;
    ++iter_;
    return st;
  }

  // Hands block k to the host cache with its dirty flag and drops its
  // optimizer state. Returns the number of iterations it stayed resident.
  // Between iterations the next one to run is the first without the block.
  std::uint64_t evict_block(BlockId k) { return evict_before(k, iter_); }

 private:
  // `first_absent` is the first iteration that computes without block k.
  std::uint64_t evict_before(BlockId k, std::uint64_t first_absent) {
    ArenaBlock b = arena_.evict(k);
    cache_.insert_from_arena(std::move(b.payload), b.dirty);
    ever_evicted_[k] = true;
    const std::uint64_t streak = first_absent - admitted_at_[k];
    ++churn_.evictions;
    ++churn_.completed_streaks;
    churn_.completed_streak_iters += streak;
    return streak;
  }

 public:

  // Persists every dirty block and writes a manifest next to the store.
  // Returns the patch bytes appended.
  std::uint64_t checkpoint(const std::filesystem::path& manifest_path, const nlohmann::json& extra = {}) {
    drain();
    const std::uint64_t before = store_.stats().bytes_written;
    for (auto& [k, blk] : arena_) {
      if (!blk.dirty) continue;
      cache_.insert_from_arena(blk.payload, true);
      blk.dirty = false;
    }
    drain();
    cache_.flush_all();
    const std::uint64_t written = store_.stats().bytes_written - before;

    nlohmann::json m;
    m["iteration"] = iter_;
    m["resident"] = arena_.resident();
    m["index_versions"] = nlohmann::json::array();
    for (const IndexEntry& e : store_.index()) m["index_versions"].push_back(e.version);
    m["config"] = {{"capacity", cfg_.scheduler.capacity}, {"lambda", cfg_.scheduler.lambda},
                   {"gamma", cfg_.scheduler.gamma},       {"beta", cfg_.scheduler.beta},
                   {"overlap", cfg_.overlap},             {"tide", cfg_.tide}};
    if (!extra.is_null()) m["run"] = extra;
    const std::filesystem::path tmp = manifest_path.string() + ".tmp";
    {
      std::ofstream f(tmp);
      if (!f) throw StoreError("cannot write manifest " + tmp.string());
      f << m.dump(2) << '\n';
      if (!f) throw StoreError("failed writing manifest " + tmp.string());
    }
    std::filesystem::rename(tmp, manifest_path);
    return written;
  }

  // Waits for queued flushes and surfaces any flush failure.
  void drain() {
    if (flusher_) flusher_->drain();
    rethrow_flush_error();
  }

 private:
  static double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  // `first_iter` is the first iteration that computes with the block.
  void admit(BlockPayload p, std::uint64_t first_iter) {
    const BlockId k = p.block_id;
    arena_.admit(std::move(p), ever_evicted_[k]);
    admitted_at_[k] = first_iter;
  }

  // The block crosses the boundary both ways but stays resident, so its
  // optimizer state survives.
  void restage_block(BlockId k) {
    ArenaBlock& b = arena_.at(k);
    cache_.insert_from_arena(b.payload, b.dirty);
    b.payload = cache_.get(k);
    b.dirty = false;
  }

  void rethrow_flush_error() {
    std::lock_guard lock(error_mu_);
    if (flush_error_) {
      std::exception_ptr e = flush_error_;
      flush_error_ = nullptr;
      std::rethrow_exception(e);
    }
  }

  LogStore& store_;
  HostCache& cache_;
  PipelineConfig cfg_;
  ResidentArena arena_;
  std::vector<BlockBound> bounds_;
  RecencyTable recency_;
  ComputeFn compute_;
  std::vector<bool> ever_evicted_;
  std::vector<std::uint64_t> admitted_at_;
  ChurnCounters churn_;
  std::uint64_t iter_ = 0;
  std::unique_ptr<Worker> prefetcher_;
  std::unique_ptr<Worker> flusher_;
  std::mutex error_mu_;
  std::exception_ptr flush_error_;
};

}  // namespace tidal
