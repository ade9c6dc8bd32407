#include <gtest/gtest.h>

#include <set>

#include "tidal/param_table.hpp"

using namespace tidal;

TEST(OwnerBlock, FirstRowAndBoundary) {
  const TableConfig cfg = TableConfig::make(10000, 59, 4096);
  EXPECT_EQ(owner_block(0, cfg), 0u);
  EXPECT_EQ(owner_block(4096, cfg), 1u);
}

TEST(OwnerBlock, CeilArithmetic) {
  const TableConfig cfg = TableConfig::make(10000, 59, 4096);
  EXPECT_EQ(cfg.k_blocks(), 3u);
  EXPECT_EQ(owner_block(9999, cfg), 2u);
  EXPECT_EQ(cfg.rows_in_block(2), 10000u - 2 * 4096);
}

TEST(OwnerBlock, OutOfRangeThrows) {
  const TableConfig cfg = TableConfig::make(10, 9, 4);
  EXPECT_THROW(owner_block(10, cfg), std::out_of_range);
}

TEST(OwnerBlock, PartitionByEnumeration) {
  for (std::uint32_t b : {1u, 7u, 64u, 4096u}) {
    const TableConfig cfg = TableConfig::make(100000, 9, b);
    std::vector<std::uint64_t> rows(cfg.k_blocks(), 0);
    for (PrimitiveId i = 0; i < cfg.n_primitives; ++i) {
      const BlockId k = owner_block(i, cfg);
      ASSERT_GE(i, std::uint64_t{k} * b);
      ASSERT_LT(i, std::uint64_t{k + 1} * b);
      ++rows[k];
    }
    std::uint64_t total = 0;
    for (BlockId k = 0; k < cfg.k_blocks(); ++k) {
      EXPECT_EQ(rows[k], cfg.rows_in_block(k));
      total += rows[k];
    }
    EXPECT_EQ(total, cfg.n_primitives);
  }
}

TEST(BlockPayloadBytes, FullWidthLayoutIs236Pages) {
  const TableConfig cfg = TableConfig::make(1, 59, 4096);
  EXPECT_EQ(block_payload_bytes(cfg), 966656u);
  EXPECT_EQ(block_payload_bytes(cfg), 236u * 4096u);
  EXPECT_EQ(block_payload_bytes(cfg) % 4096, 0u);
}

TEST(BlockPayloadBytes, SmallAndToy) {
  EXPECT_EQ(block_payload_bytes(TableConfig::make(1, 1, 1)), 4u);
  EXPECT_EQ(block_payload_bytes(TableConfig::make(1, 9, 4096)), 147456u);
}

TEST(TableConfig, RejectsInvalid) {
  EXPECT_THROW(TableConfig::make(0, 9, 4), ConfigError);
  EXPECT_THROW(TableConfig::make(1, 0, 4), ConfigError);
  EXPECT_THROW(TableConfig::make(1, 9, 0), ConfigError);
}

TEST(SplitIntoBlocks, PadsLastBlockWithZeros) {
  const TableConfig cfg = TableConfig::make(5, 2, 4);
  std::vector<float> table(10);
  for (std::size_t i = 0; i < table.size(); ++i) table[i] = static_cast<float>(i + 1);
  const auto blocks = split_into_blocks(table, cfg);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0].bytes(), block_payload_bytes(cfg));
  EXPECT_EQ(blocks[1].bytes(), block_payload_bytes(cfg));
  EXPECT_EQ(blocks[1].values[0], 9.0f);
  EXPECT_EQ(blocks[1].values[1], 10.0f);
  for (std::size_t i = 2; i < blocks[1].values.size(); ++i) EXPECT_EQ(blocks[1].values[i], 0.0f);
  EXPECT_THROW(split_into_blocks(std::vector<float>(9), cfg), ConfigError);
}
