#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "tidal/log_store.hpp"
#include "tidal/param_table.hpp"

namespace tidal {

// A dirty block that left the cache and still has to reach the store.
struct FlushJob {
  BlockPayload payload;
  std::uint64_t seq = 0;
};

using FlushSink = std::function<void(std::vector<FlushJob>)>;

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t dirty_evictions = 0;
  std::uint64_t miss_bytes = 0;   // bytes served from below the cache
  std::uint64_t flush_bytes = 0;  // payload bytes handed to the flush path
};

// LRU block cache with per-block dirty bits, between the log store and the
// arena. Recency is refreshed on every access whether or not the entry is
// dirty. Dirty entries are persisted only when evicted or on flush_all.
//
// Evicted dirty payloads stay readable ("pending") until the flush path calls
// retire(), so a read racing the flush never falls through to a stale store
// record. Such reads still count as misses.
class HostCache {
 public:
  HostCache(LogStore& store, std::uint64_t capacity_bytes, FlushSink sink = {})
      : store_(store),
        block_bytes_(block_payload_bytes(store.config())),
        capacity_blocks_(capacity_bytes / block_payload_bytes(store.config())),
        sink_(std::move(sink)) {
    if (!sink_) sink_ = [this](std::vector<FlushJob> jobs) { execute(std::move(jobs)); };
  }

  HostCache(const HostCache&) = delete;
  HostCache& operator=(const HostCache&) = delete;

  void set_sink(FlushSink sink) {
    std::lock_guard lock(mu_);
    sink_ = std::move(sink);
  }

  std::size_t capacity_blocks() const { return capacity_blocks_; }

  BlockPayload get(BlockId k) {
    std::vector<FlushJob> jobs;
    BlockPayload out;
    FlushSink sink;
    {
      std::lock_guard lock(mu_);
      if (auto it = entries_.find(k); it != entries_.end()) {
        ++stats_.hits;
        touch(it->second);
        return it->second.payload;
      }
      ++stats_.misses;
      stats_.miss_bytes += block_bytes_;
      if (auto p = pending_.find(k); p != pending_.end()) {
        out = p->second.payload;
      } else {
        out = store_.read_block(k);
      }
      place(out, false);
      jobs = evict_locked();
      sink = sink_;
    }
    if (!jobs.empty()) sink(std::move(jobs));
    return out;
  }

  // Arena write-back: the incoming copy replaces whatever the cache holds.
  void insert_from_arena(BlockPayload payload, bool dirty) {
    std::vector<FlushJob> jobs;
    FlushSink sink;
    {
      std::lock_guard lock(mu_);
      if (auto it = entries_.find(payload.block_id); it != entries_.end()) {
        // A stale dirty copy is superseded, not flushed.
        dirty = dirty || it->second.dirty;
        lru_.erase(it->second.pos);
        entries_.erase(it);
      }
      place(std::move(payload), dirty);
      jobs = evict_locked();
      sink = sink_;
    }
    if (!jobs.empty()) sink(std::move(jobs));
  }

  // Evicts from the LRU tail until within capacity. Dirty evictees come back
  // as flush jobs (the caller owns them); clean ones are dropped.
  std::vector<FlushJob> evict_until_fits() {
    std::lock_guard lock(mu_);
    return evict_locked();
  }

  // Appends every dirty entry in one batch and marks them clean.
  void flush_all() {
    std::vector<BlockPayload> batch;
    std::vector<std::pair<BlockId, std::uint64_t>> seqs;
    {
      std::lock_guard lock(mu_);
      for (auto it = lru_.rbegin(); it != lru_.rend(); ++it) {
        const Entry& e = entries_.at(*it);
        if (!e.dirty) continue;
        batch.push_back(e.payload);
        seqs.emplace_back(*it, e.seq);
      }
    }
    if (batch.empty()) return;
    store_.append_patch(batch);
    std::lock_guard lock(mu_);
    stats_.flush_bytes += batch.size() * block_bytes_;
    for (const auto& [k, seq] : seqs) {
      auto it = entries_.find(k);
      if (it != entries_.end() && it->second.seq == seq) {
        it->second.dirty = false;
        it->second.payload.version = store_.entry(k).version;
      }
    }
  }

  // Appends jobs to the store and retires them; the default flush path.
  void execute(std::vector<FlushJob> jobs) {
    if (jobs.empty()) return;
    std::vector<BlockPayload> batch;
    batch.reserve(jobs.size());
    for (const FlushJob& j : jobs) batch.push_back(j.payload);
    store_.append_patch(batch);
    retire(jobs);
  }

  // Called once jobs are durable in the store.
  void retire(const std::vector<FlushJob>& jobs) {
    std::lock_guard lock(mu_);
    for (const FlushJob& j : jobs) {
      auto it = pending_.find(j.payload.block_id);
      if (it != pending_.end() && it->second.seq == j.seq) pending_.erase(it);
    }
  }

  bool contains(BlockId k) const {
    std::lock_guard lock(mu_);
    return entries_.count(k) != 0;
  }

  bool is_dirty(BlockId k) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(k);
    return it != entries_.end() && it->second.dirty;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  std::size_t pending_flushes() const {
    std::lock_guard lock(mu_);
    return pending_.size();
  }

  // Most recently used first.
  std::vector<BlockId> lru_order() const {
    std::lock_guard lock(mu_);
    return {lru_.begin(), lru_.end()};
  }

  CacheStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }

  // Newest host-visible copy: cache entry, then pending flush, else nothing.
  std::optional<BlockPayload> peek(BlockId k) const {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(k); it != entries_.end()) return it->second.payload;
    if (auto p = pending_.find(k); p != pending_.end()) return p->second.payload;
    return std::nullopt;
  }

 private:
  struct Entry {
    BlockPayload payload;
    bool dirty = false;
    std::uint64_t seq = 0;
    std::list<BlockId>::iterator pos;
  };

  void touch(Entry& e) { lru_.splice(lru_.begin(), lru_, e.pos); }

  void place(BlockPayload payload, bool dirty) {
    const BlockId k = payload.block_id;
    lru_.push_front(k);
    Entry e{std::move(payload), dirty, ++seq_, lru_.begin()};
    entries_.insert_or_assign(k, std::move(e));
  }

  std::vector<FlushJob> evict_locked() {
    std::vector<FlushJob> jobs;
    while (entries_.size() > capacity_blocks_) {
      const BlockId victim = lru_.back();
      lru_.pop_back();
      auto it = entries_.find(victim);
      ++stats_.evictions;
      if (it->second.dirty) {
        ++stats_.dirty_evictions;
        stats_.flush_bytes += block_bytes_;
        pending_.insert_or_assign(victim, Pending{it->second.payload, it->second.seq});
        jobs.push_back(FlushJob{std::move(it->second.payload), it->second.seq});
      }
      entries_.erase(it);
    }
    return jobs;
  }

  struct Pending {
    BlockPayload payload;
    std::uint64_t seq = 0;
  };

  LogStore& store_;
  std::size_t block_bytes_;
  std::size_t capacity_blocks_;
  FlushSink sink_;
  mutable std::mutex mu_;
  std::list<BlockId> lru_;
  std::unordered_map<BlockId, Entry> entries_;
  std::unordered_map<BlockId, Pending> pending_;
  std::uint64_t seq_ = 0;
  CacheStats stats_;
};

}  // namespace tidal
