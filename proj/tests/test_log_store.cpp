#include <gtest/gtest.h>

#include <fstream>

#include "storage_fuzz.hpp"
#include "tidal/log_store.hpp"

using namespace tidal;
using tidal::testing::fresh_dir;
using tidal::testing::random_payload;

namespace {

std::vector<BlockPayload> random_blocks(const TableConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<BlockPayload> out;
  for (BlockId k = 0; k < cfg.k_blocks(); ++k) out.push_back(random_payload(k, cfg, rng));
  return out;
}

}  // namespace

TEST(WriteBase, FullWidthRows) {
  const auto dir = fresh_dir("base_size");
  const TableConfig cfg = TableConfig::make(8192, 59, 4096);
  write_base(dir, cfg, random_blocks(cfg, 1));
  EXPECT_EQ(std::filesystem::file_size(base_path(dir)), kSegmentHeaderBytes + 2 * 966656u);
  LogStore store(dir);
  for (BlockId k = 0; k < 2; ++k) {
    EXPECT_EQ(store.entry(k), (IndexEntry{0, base_record_offset(cfg, k), 966656u, 0}));
    EXPECT_EQ(store.entry(k).offset % 4096, 0u);
  }
}

TEST(WriteBase, SinglePrimitiveIsOneZeroPaddedRecord) {
  const auto dir = fresh_dir("base_one");
  const TableConfig cfg = TableConfig::make(1, 9, 16);
  auto blocks = split_into_blocks(std::vector<float>(9, 1.0f), cfg);
  write_base(dir, cfg, blocks);
  LogStore store(dir);
  const BlockPayload p = store.read_block(0);
  EXPECT_EQ(p.version, 0u);
  for (std::size_t i = 0; i < p.values.size(); ++i) EXPECT_EQ(p.values[i], i < 9 ? 1.0f : 0.0f);
}

TEST(WriteBase, RoundTripAndHeaderChecks) {
  const auto dir = fresh_dir("base_rt");
  const TableConfig cfg = TableConfig::make(100, 7, 8);
  const auto blocks = random_blocks(cfg, 2);
  write_base(dir, cfg, blocks);
  LogStore store(dir);
  EXPECT_EQ(store.config(), cfg);
  for (BlockId k = 0; k < cfg.k_blocks(); ++k) EXPECT_EQ(store.read_block(k).values, blocks[k].values);
  EXPECT_THROW(store.read_block(static_cast<BlockId>(cfg.k_blocks())), std::out_of_range);
  EXPECT_THROW(write_base(dir, cfg, std::vector<BlockPayload>(blocks.begin(), blocks.end() - 1)), StoreError);
}

TEST(AppendPatch, VersionsAndMonotoneOffsets) {
  const auto dir = fresh_dir("append");
  const TableConfig cfg = TableConfig::make(64, 3, 8);
  auto blocks = random_blocks(cfg, 3);
  write_base(dir, cfg, blocks);
  LogStore store(dir);
  std::mt19937_64 rng(4);
  const BlockPayload a = random_payload(3, cfg, rng), b = random_payload(3, cfg, rng);
  store.append_patch(std::vector<BlockPayload>{a});
  const IndexEntry first = store.entry(3);
  store.append_patch(std::vector<BlockPayload>{b});
  const IndexEntry second = store.entry(3);
  EXPECT_EQ(second.version, 2u);
  EXPECT_EQ(first.file_id, second.file_id);
  EXPECT_GT(second.offset, first.offset);
  EXPECT_EQ(store.read_block(3).values, b.values);
  EXPECT_EQ(store.read_block(3).version, 2u);
  EXPECT_EQ(store.stats().backward_writes, 0u);
}

TEST(AppendPatch, EmptyIsNoOp) {
  const auto dir = fresh_dir("append_empty");
  const TableConfig cfg = TableConfig::make(16, 3, 8);
  write_base(dir, cfg, random_blocks(cfg, 5));
  LogStore store(dir);
  const Index before = store.index();
  store.append_patch({});
  EXPECT_EQ(store.index(), before);
  EXPECT_TRUE(list_patches(dir).empty());
}

TEST(AppendPatch, FuzzAgainstMapOracle) {
  const auto r = tidal::testing::fuzz_store(fresh_dir("fuzz_store"), 10000, 11);
  EXPECT_EQ(r.divergences, 0u) << r.first_failure;
  EXPECT_EQ(r.index_mismatches, 0u) << r.first_failure;
  EXPECT_GT(r.index_checks, 100u);
}

TEST(ReadBlock, CorruptedRecordIsReported) {
  const auto dir = fresh_dir("corrupt");
  const TableConfig cfg = TableConfig::make(16, 3, 8);
  write_base(dir, cfg, random_blocks(cfg, 6));
  {
    LogStore store(dir);
    std::mt19937_64 rng(1);
    store.append_patch(std::vector<BlockPayload>{random_payload(1, cfg, rng)});
  }
  // Flip a payload byte of the only record: detected when the store opens,
  // and by read_block when it happens under an open store.
  const auto p = patch_path(dir, 1);
  auto flip = [&] {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(static_cast<std::streamoff>(kSegmentHeaderBytes + kRecordHeaderBytes + 5));
    const char c = static_cast<char>(f.get());
    f.seekp(static_cast<std::streamoff>(kSegmentHeaderBytes + kRecordHeaderBytes + 5));
    f.put(static_cast<char>(c ^ 0x5a));
  };
  LogStore open_store(dir);
  flip();
  EXPECT_THROW(open_store.read_block(1), StoreError);
  EXPECT_THROW(LogStore{dir}, StoreError);
}

TEST(Compact, NoPatchesIsNoOp) {
  const auto dir = fresh_dir("compact_noop");
  const TableConfig cfg = TableConfig::make(16, 3, 8);
  write_base(dir, cfg, random_blocks(cfg, 7));
  const auto before = std::filesystem::file_size(base_path(dir));
  LogStore store(dir);
  EXPECT_EQ(store.compact(), 0);
  EXPECT_EQ(std::filesystem::file_size(base_path(dir)), before);
}

TEST(Compact, OnePatchedBlockChangesOneRecord) {
  const auto dir = fresh_dir("compact_one");
  const TableConfig cfg = TableConfig::make(32, 3, 8);
  const auto blocks = random_blocks(cfg, 8);
  write_base(dir, cfg, blocks);
  LogStore store(dir);
  std::mt19937_64 rng(2);
  const BlockPayload np = random_payload(2, cfg, rng);
  store.append_patch(std::vector<BlockPayload>{np});
  store.compact();
  EXPECT_TRUE(list_patches(dir).empty());
  for (BlockId k = 0; k < cfg.k_blocks(); ++k) {
    EXPECT_EQ(store.entry(k).file_id, 0u);
    EXPECT_EQ(store.read_block(k).values, k == 2 ? np.values : blocks[k].values);
  }
  EXPECT_EQ(store.entry(2).version, 1u);
  // Versions survive a reopen through the base trailer.
  LogStore reopened(dir);
  EXPECT_EQ(reopened.index(), store.index());
}

TEST(RecoverIndex, BaseOnlyAndPatchedEntries) {
  const auto dir = fresh_dir("recover");
  const TableConfig cfg = TableConfig::make(48, 3, 8);
  write_base(dir, cfg, random_blocks(cfg, 9));
  const RecoveredIndex base = recover_index(dir);
  for (BlockId k = 0; k < cfg.k_blocks(); ++k) EXPECT_EQ(base.index[k].file_id, 0u);
  LogStore store(dir);
  std::mt19937_64 rng(3);
  store.append_patch(std::vector<BlockPayload>{random_payload(1, cfg, rng), random_payload(5, cfg, rng)});
  const RecoveredIndex rec = recover_index(dir);
  for (BlockId k = 0; k < cfg.k_blocks(); ++k) EXPECT_EQ(rec.index[k].file_id, (k == 1 || k == 5) ? 1u : 0u);
  EXPECT_EQ(rec.index, store.index());
}

TEST(RecoverIndex, TruncatedTailOfNewestPatchIsDropped) {
  const auto dir = fresh_dir("recover_tail");
  const TableConfig cfg = TableConfig::make(48, 3, 8);
  write_base(dir, cfg, random_blocks(cfg, 10));
  Index after_first;
  {
    LogStore store(dir);
    std::mt19937_64 rng(3);
    store.append_patch(std::vector<BlockPayload>{random_payload(1, cfg, rng)});
    after_first = store.index();
    store.append_patch(std::vector<BlockPayload>{random_payload(2, cfg, rng)});
  }
  const auto p = patch_path(dir, 1);
  std::filesystem::resize_file(p, std::filesystem::file_size(p) - 7);
  const RecoveredIndex rec = recover_index(dir);
  EXPECT_EQ(rec.index, after_first);
  EXPECT_GT(rec.dropped_tail_bytes, 0u);
  LogStore reopened(dir);
  EXPECT_EQ(reopened.index(), after_first);
  std::mt19937_64 rng(4);
  reopened.append_patch(std::vector<BlockPayload>{random_payload(2, cfg, rng)});
  EXPECT_EQ(recover_index(dir).index, reopened.index());
}

TEST(RecoverIndex, CorruptionOutsideTailIsAnError) {
  const auto dir = fresh_dir("recover_bad");
  const TableConfig cfg = TableConfig::make(48, 3, 8);
  write_base(dir, cfg, random_blocks(cfg, 11));
  {
    StoreOptions o;
    o.segment_budget = 1;  // one record per segment
    LogStore store(dir, o);
    std::mt19937_64 rng(3);
    store.append_patch(std::vector<BlockPayload>{random_payload(1, cfg, rng), random_payload(2, cfg, rng)});
  }
  ASSERT_EQ(list_patches(dir).size(), 2u);
  const auto p = patch_path(dir, 1);
  std::filesystem::resize_file(p, std::filesystem::file_size(p) - 7);
  EXPECT_THROW(recover_index(dir), StoreError);
}

TEST(Options, InjectedFaultPropagates) {
  const auto dir = fresh_dir("fault");
  const TableConfig cfg = TableConfig::make(16, 3, 8);
  write_base(dir, cfg, random_blocks(cfg, 12));
  StoreOptions o;
  o.read_fault = [](BlockId k) {
    if (k == 1) throw StoreError("injected");
  };
  LogStore store(dir, o);
  EXPECT_NO_THROW(store.read_block(0));
  EXPECT_THROW(store.read_block(1), StoreError);
}
