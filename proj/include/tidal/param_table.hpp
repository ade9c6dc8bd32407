#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tidal {

using BlockId = std::uint32_t;
using PrimitiveId = std::uint64_t;

// Sorted, duplicate-free list of block ids. All set-valued results in the
// library use this representation so iteration order is deterministic.
using BlockSet = std::vector<BlockId>;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shape of the logical N x D parameter table and its block grid.
struct TableConfig {
  std::uint64_t n_primitives = 1;
  std::uint32_t dim = 59;
  std::uint32_t block_size = 4096;

  static TableConfig make(std::uint64_t n, std::uint32_t d, std::uint32_t b) {
    TableConfig cfg{n, d, b};
    cfg.validate();
    return cfg;
  }

  void validate() const {
    if (n_primitives < 1) throw ConfigError("table needs at least one primitive");
    if (dim < 1) throw ConfigError("table dimension must be >= 1");
    if (block_size < 1) throw ConfigError("block size must be >= 1");
  }

  std::uint64_t k_blocks() const { return (n_primitives + block_size - 1) / block_size; }

  // Logical rows held by block k; only the last block can be short.
  std::uint32_t rows_in_block(BlockId k) const {
    const std::uint64_t first = static_cast<std::uint64_t>(k) * block_size;
    if (first >= n_primitives) return 0;
    const std::uint64_t rest = n_primitives - first;
    return rest < block_size ? static_cast<std::uint32_t>(rest) : block_size;
  }

  bool operator==(const TableConfig&) const = default;
};

inline BlockId owner_block(PrimitiveId i, const TableConfig& cfg) {
  if (i >= cfg.n_primitives) {
    throw std::out_of_range("primitive index " + std::to_string(i) + " outside table of " +
                            std::to_string(cfg.n_primitives));
  }
  return static_cast<BlockId>(i / cfg.block_size);
}

// Every physical block record is B*D fp32 values, regardless of how many
// logical rows the block holds.
inline std::size_t block_payload_bytes(const TableConfig& cfg) {
  return static_cast<std::size_t>(cfg.block_size) * cfg.dim * sizeof(float);
}

inline std::size_t block_payload_floats(const TableConfig& cfg) {
  return static_cast<std::size_t>(cfg.block_size) * cfg.dim;
}

struct BlockPayload {
  BlockId block_id = 0;
  std::uint64_t version = 0;
  std::vector<float> values;  // B*D row-major, rows past the logical count are zero

  static BlockPayload zeros(BlockId k, const TableConfig& cfg) {
    return BlockPayload{k, 0, std::vector<float>(block_payload_floats(cfg), 0.0f)};
  }

  std::size_t bytes() const { return values.size() * sizeof(float); }

  float* row(std::uint32_t r, std::uint32_t dim) { return values.data() + static_cast<std::size_t>(r) * dim; }
  const float* row(std::uint32_t r, std::uint32_t dim) const {
    return values.data() + static_cast<std::size_t>(r) * dim;
  }
};

// I_t, K_t and R_t for one iteration.
struct ActiveSets {
  std::vector<PrimitiveId> gaussian_active;
  BlockSet block_working;
  BlockSet resident;
};

// Splits a dense row-major N x D table into zero-padded block payloads.
inline std::vector<BlockPayload> split_into_blocks(const std::vector<float>& table, const TableConfig& cfg) {
  if (table.size() != cfg.n_primitives * cfg.dim) {
    throw ConfigError("table has " + std::to_string(table.size()) + " values, expected " +
                      std::to_string(cfg.n_primitives * cfg.dim));
  }
  std::vector<BlockPayload> blocks;
  blocks.reserve(cfg.k_blocks());
  for (BlockId k = 0; k < cfg.k_blocks(); ++k) {
    BlockPayload p = BlockPayload::zeros(k, cfg);
    const std::size_t first = static_cast<std::size_t>(k) * cfg.block_size * cfg.dim;
    const std::size_t count = static_cast<std::size_t>(cfg.rows_in_block(k)) * cfg.dim;
    std::copy(table.begin() + static_cast<std::ptrdiff_t>(first),
              table.begin() + static_cast<std::ptrdiff_t>(first + count), p.values.begin());
    blocks.push_back(std::move(p));
  }
  return blocks;
}

}  // namespace tidal
