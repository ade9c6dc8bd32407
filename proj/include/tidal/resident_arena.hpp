#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tidal/param_table.hpp"

namespace tidal {

// Adam moments for one block, allocated on admission and dropped on eviction.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::uint64_t step = 0;  // local to the block, restarts at 0 on re-admission
};

struct ArenaBlock {
  BlockPayload payload;
  bool dirty = false;
  AdamState opt;
  bool cold_restart_pending = false;  // re-admitted and not yet updated
};

class ArenaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bounded set of materialized blocks; the fastest tier.
class ResidentArena {
 public:
  ResidentArena(const TableConfig& cfg, std::size_t capacity) : cfg_(cfg), capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("arena capacity must be >= 1 block");
  }

  const TableConfig& config() const { return cfg_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return blocks_.size(); }
  bool full() const { return blocks_.size() >= capacity_; }
  bool contains(BlockId k) const { return blocks_.count(k) != 0; }

  ArenaBlock& at(BlockId k) { return lookup(k); }
  const ArenaBlock& at(BlockId k) const { return const_cast<ResidentArena*>(this)->lookup(k); }

  BlockSet resident() const {
    BlockSet out;
    out.reserve(blocks_.size());
    for (const auto& [k, _] : blocks_) out.push_back(k);
    return out;
  }

  // Materializes a block with zeroed optimizer state.
  void admit(BlockPayload payload, bool readmission) {
    const BlockId k = payload.block_id;
    if (contains(k)) throw ArenaError("block " + std::to_string(k) + " already resident");
    if (full()) throw ArenaError("arena full (" + std::to_string(capacity_) + " blocks)");
    if (payload.values.size() != block_payload_floats(cfg_)) throw ArenaError("payload size mismatch");
    ArenaBlock b;
    b.opt.m.assign(payload.values.size(), 0.0f);
    b.opt.v.assign(payload.values.size(), 0.0f);
    b.payload = std::move(payload);
    b.cold_restart_pending = readmission;
    blocks_.emplace(k, std::move(b));
  }

  // Removes the block; its optimizer state goes with it.
  ArenaBlock evict(BlockId k) {
    auto it = blocks_.find(k);
    if (it == blocks_.end()) throw ArenaError("block " + std::to_string(k) + " not resident");
    ArenaBlock b = std::move(it->second);
    blocks_.erase(it);
    return b;
  }

  auto begin() { return blocks_.begin(); }
  auto end() { return blocks_.end(); }
  auto begin() const { return blocks_.begin(); }
  auto end() const { return blocks_.end(); }

 private:
  ArenaBlock& lookup(BlockId k) {
    auto it = blocks_.find(k);
    if (it == blocks_.end()) throw ArenaError("block " + std::to_string(k) + " not resident");
    return it->second;
  }

  TableConfig cfg_;
  std::size_t capacity_;
  std::map<BlockId, ArenaBlock> blocks_;
};

}  // namespace tidal
