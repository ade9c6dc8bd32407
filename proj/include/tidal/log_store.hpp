#pragma once

// Disk tier: one immutable base segment plus append-only patch segments.
//
// base.tdgs            4096-byte header, then K fixed-size records at
//                      offset(k) = 4096 + k*B*D*4, then (only after a
//                      compaction) a trailer of K u64 versions.
// patch-%06d.tdgp      4096-byte header, then records
//                      u64 block_id | u64 version | u32 len | payload | u32 crc
//
// All integers little-endian. The crc covers the 20-byte record header and
// the payload.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "tidal/crc32.hpp"
#include "tidal/param_table.hpp"

namespace tidal {

static_assert(std::endian::native == std::endian::little, "record payloads are written in host order");

inline constexpr std::size_t kSegmentHeaderBytes = 4096;
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kBaseMagic[4] = {'T', 'D', 'G', 'S'};
inline constexpr char kPatchMagic[4] = {'T', 'D', 'G', 'P'};
inline constexpr std::size_t kRecordHeaderBytes = 8 + 8 + 4;
inline constexpr std::size_t kRecordTrailerBytes = 4;

struct IndexEntry {
  std::uint32_t file_id = 0;
  std::uint64_t offset = 0;  // of the payload
  std::uint32_t size = 0;
  std::uint64_t version = 0;
  bool operator==(const IndexEntry&) const = default;
};

using Index = std::vector<IndexEntry>;

enum class SegmentKind : std::uint32_t { base = 0, patch = 1 };

struct SegmentHeader {
  char magic[4] = {};
  std::uint32_t format_version = kFormatVersion;
  SegmentKind kind = SegmentKind::base;
  std::uint32_t dim = 0;
  std::uint64_t n = 0;
  std::uint32_t block_size = 0;
  std::uint32_t file_id = 0;
  std::uint64_t k_blocks = 0;
  std::uint64_t versions_offset = 0;  // base only; 0 means every version is 0

  TableConfig table() const { return TableConfig{n, dim, block_size}; }
};

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StoreOptions {
  std::uint64_t segment_budget = 256ull << 20;  // bytes per patch segment before rollover
  std::chrono::microseconds read_latency{0};    // injected per block read
  std::chrono::microseconds write_latency{0};   // injected per record append
  std::function<void(BlockId)> read_fault;      // test hook, may throw
};

namespace detail {

template <typename T>
void put_le(std::vector<std::byte>& out, std::size_t at, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out[at + i] = static_cast<std::byte>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xffu);
}

template <typename T>
T get_le(std::span<const std::byte> in, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return static_cast<T>(v);
}

inline std::vector<std::byte> encode_header(const SegmentHeader& h) {
  std::vector<std::byte> buf(kSegmentHeaderBytes, std::byte{0});
  std::memcpy(buf.data(), h.magic, 4);
  put_le<std::uint32_t>(buf, 4, h.format_version);
  put_le<std::uint32_t>(buf, 8, static_cast<std::uint32_t>(h.kind));
  put_le<std::uint32_t>(buf, 12, h.dim);
  put_le<std::uint64_t>(buf, 16, h.n);
  put_le<std::uint32_t>(buf, 24, h.block_size);
  put_le<std::uint32_t>(buf, 28, h.file_id);
  put_le<std::uint64_t>(buf, 32, h.k_blocks);
  put_le<std::uint64_t>(buf, 40, h.versions_offset);
  return buf;
}

inline SegmentHeader decode_header(std::span<const std::byte> buf) {
  SegmentHeader h;
  std::memcpy(h.magic, buf.data(), 4);
  h.format_version = get_le<std::uint32_t>(buf, 4);
  h.kind = static_cast<SegmentKind>(get_le<std::uint32_t>(buf, 8));
  h.dim = get_le<std::uint32_t>(buf, 12);
  h.n = get_le<std::uint64_t>(buf, 16);
  h.block_size = get_le<std::uint32_t>(buf, 24);
  h.file_id = get_le<std::uint32_t>(buf, 28);
  h.k_blocks = get_le<std::uint64_t>(buf, 32);
  h.versions_offset = get_le<std::uint64_t>(buf, 40);
  return h;
}

// Owning POSIX descriptor.
class File {
 public:
  File() = default;
  File(const std::filesystem::path& path, int flags, mode_t mode = 0644) : path_(path) {
    fd_ = ::open(path.c_str(), flags | O_CLOEXEC, mode);
    if (fd_ < 0) throw StoreError("open " + path.string() + ": " + std::strerror(errno));
  }
  File(File&& o) noexcept : fd_(std::exchange(o.fd_, -1)), path_(std::move(o.path_)) {}
  File& operator=(File&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
      path_ = std::move(o.path_);
    }
    return *this;
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;
  ~File() { close(); }

  bool is_open() const { return fd_ >= 0; }
  const std::filesystem::path& path() const { return path_; }

  void pread_all(void* dst, std::size_t len, std::uint64_t off) const {
    auto* p = static_cast<char*>(dst);
    while (len > 0) {
      const ssize_t got = ::pread(fd_, p, len, static_cast<off_t>(off));
      if (got < 0 && errno == EINTR) continue;
      if (got <= 0) throw StoreError("short read from " + path_.string() + " at " + std::to_string(off));
      p += got;
      len -= static_cast<std::size_t>(got);
      off += static_cast<std::uint64_t>(got);
    }
  }

  void pwrite_all(const void* src, std::size_t len, std::uint64_t off) const {
    const auto* p = static_cast<const char*>(src);
    while (len > 0) {
      const ssize_t put = ::pwrite(fd_, p, len, static_cast<off_t>(off));
      if (put < 0 && errno == EINTR) continue;
      if (put <= 0) throw StoreError("write to " + path_.string() + " failed: " + std::strerror(errno));
      p += put;
      len -= static_cast<std::size_t>(put);
      off += static_cast<std::uint64_t>(put);
    }
  }

  void sync() const {
    if (::fsync(fd_) != 0) throw StoreError("fsync " + path_.string() + ": " + std::strerror(errno));
  }

  std::uint64_t size() const {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) throw StoreError("stat " + path_.string());
    return static_cast<std::uint64_t>(st.st_size);
  }

  void truncate(std::uint64_t len) const {
    if (::ftruncate(fd_, static_cast<off_t>(len)) != 0) throw StoreError("truncate " + path_.string());
  }

 private:
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  int fd_ = -1;
  std::filesystem::path path_;
};

inline std::uint32_t record_crc(std::span<const std::byte> header, std::span<const std::byte> payload) {
  return Crc32{}.update(header).update(payload).value();
}

}  // namespace detail

inline std::filesystem::path base_path(const std::filesystem::path& dir) { return dir / "base.tdgs"; }

inline std::filesystem::path patch_path(const std::filesystem::path& dir, std::uint32_t file_id) {
  char name[32];
  std::snprintf(name, sizeof(name), "patch-%06u.tdgp", file_id);
  return dir / name;
}

inline std::uint64_t base_record_offset(const TableConfig& cfg, BlockId k) {
  return kSegmentHeaderBytes + static_cast<std::uint64_t>(k) * block_payload_bytes(cfg);
}

// Patch segment ids present in `dir`, ascending.
inline std::vector<std::uint32_t> list_patches(const std::filesystem::path& dir) {
  std::vector<std::uint32_t> ids;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    unsigned id = 0;
    char tail[8] = {};
    if (name.size() == 17 && std::sscanf(name.c_str(), "patch-%6u.%4s", &id, tail) == 2 &&
        std::string(tail) == "tdgp" && id > 0)
      ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace detail {

inline void write_base_file(const std::filesystem::path& path, const TableConfig& cfg,
                            std::span<const BlockPayload> blocks, bool with_versions) {
  const std::size_t rec = block_payload_bytes(cfg);
  SegmentHeader h;
  std::memcpy(h.magic, kBaseMagic, 4);
  h.kind = SegmentKind::base;
  h.dim = cfg.dim;
  h.n = cfg.n_primitives;
  h.block_size = cfg.block_size;
  h.k_blocks = cfg.k_blocks();
  h.versions_offset = with_versions ? kSegmentHeaderBytes + h.k_blocks * rec : 0;

  File f(path, O_WRONLY | O_CREAT | O_TRUNC);
  f.pwrite_all(encode_header(h).data(), kSegmentHeaderBytes, 0);
  for (const BlockPayload& b : blocks) f.pwrite_all(b.values.data(), rec, base_record_offset(cfg, b.block_id));
  if (with_versions) {
    std::vector<std::byte> trailer(h.k_blocks * 8);
    for (const BlockPayload& b : blocks) put_le<std::uint64_t>(trailer, std::size_t{b.block_id} * 8, b.version);
    f.pwrite_all(trailer.data(), trailer.size(), h.versions_offset);
  }
  f.sync();
}

}  // namespace detail

// Writes base.tdgs for a freshly laid-out table. `blocks` must hold one
// payload per block id, in any order.
inline void write_base(const std::filesystem::path& dir, const TableConfig& cfg, std::span<const BlockPayload> blocks) {
  cfg.validate();
  if (blocks.size() != cfg.k_blocks()) throw StoreError("write_base: expected one payload per block");
  std::vector<bool> seen(cfg.k_blocks(), false);
  for (const BlockPayload& b : blocks) {
    if (b.block_id >= cfg.k_blocks() || seen[b.block_id]) throw StoreError("write_base: bad or duplicate block id");
    if (b.values.size() != block_payload_floats(cfg)) throw StoreError("write_base: payload size mismatch");
    seen[b.block_id] = true;
  }
  std::filesystem::create_directories(dir);
  for (std::uint32_t id : list_patches(dir)) std::filesystem::remove(patch_path(dir, id));
  detail::write_base_file(base_path(dir), cfg, blocks, false);
}

struct RecoveredIndex {
  TableConfig table;
  Index index;
  std::uint32_t newest_patch = 0;       // 0 when there are no patches
  std::uint64_t newest_valid_end = 0;   // end of the last intact record in the newest patch
  std::uint64_t dropped_tail_bytes = 0;
};

// Rebuilds the per-block index by scanning base then patches in id order.
// A truncated trailing record in the newest patch is dropped; anything else
// malformed is an error.
inline RecoveredIndex recover_index(const std::filesystem::path& dir) {
  RecoveredIndex out;
  detail::File base(base_path(dir), O_RDONLY);
  std::vector<std::byte> hbuf(kSegmentHeaderBytes);
  if (base.size() < kSegmentHeaderBytes) throw StoreError(base.path().string() + ": truncated header");
  base.pread_all(hbuf.data(), hbuf.size(), 0);
  const SegmentHeader bh = detail::decode_header(hbuf);
  if (std::memcmp(bh.magic, kBaseMagic, 4) != 0 || bh.kind != SegmentKind::base)
    throw StoreError(base.path().string() + ": not a base segment");
  if (bh.format_version != kFormatVersion) throw StoreError(base.path().string() + ": unsupported format version");
  out.table = bh.table();
  out.table.validate();
  if (bh.k_blocks != out.table.k_blocks()) throw StoreError(base.path().string() + ": block count mismatch");

  const std::size_t rec = block_payload_bytes(out.table);
  const std::uint64_t need = kSegmentHeaderBytes + bh.k_blocks * rec + (bh.versions_offset ? bh.k_blocks * 8 : 0);
  if (base.size() < need) throw StoreError(base.path().string() + ": truncated base segment");

  std::vector<std::byte> versions;
  if (bh.versions_offset != 0) {
    versions.resize(bh.k_blocks * 8);
    base.pread_all(versions.data(), versions.size(), bh.versions_offset);
  }
  out.index.resize(bh.k_blocks);
  for (BlockId k = 0; k < bh.k_blocks; ++k) {
    const std::uint64_t ver = versions.empty() ? 0 : detail::get_le<std::uint64_t>(versions, std::size_t{k} * 8);
    out.index[k] = IndexEntry{0, base_record_offset(out.table, k), static_cast<std::uint32_t>(rec), ver};
  }

  const std::vector<std::uint32_t> patches = list_patches(dir);
  std::vector<std::byte> rh(kRecordHeaderBytes);
  std::vector<std::byte> payload(rec);
  std::vector<std::byte> crc_buf(kRecordTrailerBytes);
  for (std::size_t pi = 0; pi < patches.size(); ++pi) {
    const bool newest = pi + 1 == patches.size();
    detail::File f(patch_path(dir, patches[pi]), O_RDONLY);
    const std::string name = f.path().string();
    const std::uint64_t size = f.size();
    if (size < kSegmentHeaderBytes) {
      if (newest) {
        out.newest_patch = patches[pi];
        out.newest_valid_end = 0;
        out.dropped_tail_bytes = size;
        break;
      }
      throw StoreError(name + ": truncated header");
    }
    f.pread_all(hbuf.data(), hbuf.size(), 0);
    const SegmentHeader ph = detail::decode_header(hbuf);
    if (std::memcmp(ph.magic, kPatchMagic, 4) != 0 || ph.kind != SegmentKind::patch)
      throw StoreError(name + ": not a patch segment");
    if (ph.dim != out.table.dim || ph.block_size != out.table.block_size || ph.n != out.table.n_primitives ||
        ph.file_id != patches[pi])
      throw StoreError(name + ": header does not match the base segment");

    std::uint64_t off = kSegmentHeaderBytes;
    while (off < size) {
      const std::uint64_t full = kRecordHeaderBytes + rec + kRecordTrailerBytes;
      if (size - off < full) {
        if (newest) break;
        throw StoreError(name + ": truncated record at " + std::to_string(off));
      }
      f.pread_all(rh.data(), rh.size(), off);
      const auto block = detail::get_le<std::uint64_t>(rh, 0);
      const auto version = detail::get_le<std::uint64_t>(rh, 8);
      const auto len = detail::get_le<std::uint32_t>(rh, 16);
      if (len != rec) throw StoreError(name + ": record length mismatch at " + std::to_string(off));
      if (block >= bh.k_blocks) throw StoreError(name + ": block id out of range at " + std::to_string(off));
      f.pread_all(payload.data(), payload.size(), off + kRecordHeaderBytes);
      f.pread_all(crc_buf.data(), crc_buf.size(), off + kRecordHeaderBytes + rec);
      if (detail::get_le<std::uint32_t>(crc_buf, 0) != detail::record_crc(rh, payload))
        throw StoreError(name + ": checksum mismatch at " + std::to_string(off));
      IndexEntry& e = out.index[block];
      if (version > e.version) e = IndexEntry{patches[pi], off + kRecordHeaderBytes, len, version};
      off += full;
    }
    if (newest) {
      out.newest_patch = patches[pi];
      out.newest_valid_end = off;
      out.dropped_tail_bytes = size - off;
    }
  }
  return out;
}

struct StoreStats {
  std::uint64_t blocks_read = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t records_written = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t backward_writes = 0;  // appends that landed before the segment end; must stay 0
};

// One writer, many readers. read_block may run concurrently with
// append_patch; compact needs exclusive use.
class LogStore {
 public:
  explicit LogStore(std::filesystem::path dir, StoreOptions options = {})
      : dir_(std::move(dir)), options_(std::move(options)) {
    RecoveredIndex rec = recover_index(dir_);
    cfg_ = rec.table;
    index_ = std::move(rec.index);
    files_.emplace(0, detail::File(base_path(dir_), O_RDONLY));
    if (rec.newest_patch != 0) {
      detail::File f(patch_path(dir_, rec.newest_patch), O_RDWR);
      if (rec.newest_valid_end < kSegmentHeaderBytes) {
        // Header itself never made it; start the segment over.
        write_patch_header(f, rec.newest_patch);
        rec.newest_valid_end = kSegmentHeaderBytes;
      }
      if (rec.dropped_tail_bytes > 0) f.truncate(rec.newest_valid_end);
      current_patch_ = rec.newest_patch;
      current_end_ = rec.newest_valid_end;
      files_.emplace(current_patch_, std::move(f));
    }
  }

  LogStore(const LogStore&) = delete;
  LogStore& operator=(const LogStore&) = delete;

  const TableConfig& config() const { return cfg_; }
  const std::filesystem::path& directory() const { return dir_; }
  std::uint64_t k_blocks() const { return cfg_.k_blocks(); }

  Index index() const {
    std::lock_guard lock(mu_);
    return index_;
  }

  IndexEntry entry(BlockId k) const {
    std::lock_guard lock(mu_);
    check_block(k);
    return index_[k];
  }

  StoreStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }

  BlockPayload read_block(BlockId k) const {
    if (options_.read_fault) options_.read_fault(k);
    if (options_.read_latency.count() > 0) std::this_thread::sleep_for(options_.read_latency);
    std::lock_guard lock(mu_);
    check_block(k);
    const IndexEntry e = index_[k];
    const detail::File& f = file(e.file_id);
    BlockPayload out{k, e.version, std::vector<float>(block_payload_floats(cfg_))};
    if (e.file_id == 0) {
      f.pread_all(out.values.data(), e.size, e.offset);
    } else {
      std::vector<std::byte> rh(kRecordHeaderBytes);
      f.pread_all(rh.data(), rh.size(), e.offset - kRecordHeaderBytes);
      const auto block = detail::get_le<std::uint64_t>(rh, 0);
      const auto version = detail::get_le<std::uint64_t>(rh, 8);
      if (block != k || version != e.version) {
        throw StoreError("corrupted record for block " + std::to_string(k) + " in " + f.path().string());
      }
      f.pread_all(out.values.data(), e.size, e.offset);
      std::uint32_t crc = 0;
      std::vector<std::byte> cbuf(kRecordTrailerBytes);
      f.pread_all(cbuf.data(), cbuf.size(), e.offset + e.size);
      crc = detail::get_le<std::uint32_t>(cbuf, 0);
      if (crc != detail::record_crc(rh, std::as_bytes(std::span(out.values))))
        throw StoreError("checksum mismatch for block " + std::to_string(k));
    }
    ++stats_.blocks_read;
    stats_.bytes_read += e.size;
    return out;
  }

  // Appends each payload as a new version of its block, in order. The index
  // moves only for records that were fully written.
  void append_patch(std::span<const BlockPayload> blocks) {
    if (blocks.empty()) return;
    const std::size_t rec = block_payload_bytes(cfg_);
    const std::uint64_t full = kRecordHeaderBytes + rec + kRecordTrailerBytes;
    for (const BlockPayload& b : blocks) {
      if (options_.write_latency.count() > 0) std::this_thread::sleep_for(options_.write_latency);
      std::lock_guard lock(mu_);
      check_block(b.block_id);
      if (b.values.size() != block_payload_floats(cfg_)) throw StoreError("append_patch: payload size mismatch");
      if (current_patch_ == 0 || current_end_ + full > std::max<std::uint64_t>(options_.segment_budget,
                                                                                kSegmentHeaderBytes + full))
        roll_segment();
      const std::uint64_t version = index_[b.block_id].version + 1;
      std::vector<std::byte> buf(full);
      detail::put_le<std::uint64_t>(buf, 0, b.block_id);
      detail::put_le<std::uint64_t>(buf, 8, version);
      detail::put_le<std::uint32_t>(buf, 16, static_cast<std::uint32_t>(rec));
      std::memcpy(buf.data() + kRecordHeaderBytes, b.values.data(), rec);
      const std::uint32_t crc = detail::record_crc(std::span(buf).first(kRecordHeaderBytes),
                                                   std::span(buf).subspan(kRecordHeaderBytes, rec));
      detail::put_le<std::uint32_t>(buf, kRecordHeaderBytes + rec, crc);

      const detail::File& f = file(current_patch_);
      if (f.size() > current_end_) ++stats_.backward_writes;
      f.pwrite_all(buf.data(), buf.size(), current_end_);
      index_[b.block_id] = IndexEntry{current_patch_, current_end_ + kRecordHeaderBytes,
                                      static_cast<std::uint32_t>(rec), version};
      current_end_ += full;
      ++stats_.records_written;
      stats_.bytes_written += full;
    }
  }

  std::uint64_t disk_bytes() const {
    std::lock_guard lock(mu_);
    std::uint64_t total = std::filesystem::file_size(base_path(dir_));
    for (std::uint32_t id : list_patches(dir_)) total += std::filesystem::file_size(patch_path(dir_, id));
    return total;
  }

  // Folds every patch into a new base segment. Returns reclaimed bytes (may
  // be negative once the base grows its version trailer). The old files stay
  // authoritative until the rename.
  std::int64_t compact() {
    std::lock_guard lock(mu_);
    const std::vector<std::uint32_t> patches = list_patches(dir_);
    if (patches.empty()) return 0;
    std::uint64_t before = std::filesystem::file_size(base_path(dir_));
    for (std::uint32_t id : patches) before += std::filesystem::file_size(patch_path(dir_, id));

    std::vector<BlockPayload> blocks;
    blocks.reserve(index_.size());
    for (BlockId k = 0; k < index_.size(); ++k) blocks.push_back(read_locked(k));

    const std::filesystem::path tmp = dir_ / "base.tdgs.tmp";
    detail::write_base_file(tmp, cfg_, blocks, true);
    files_.clear();
    std::filesystem::rename(tmp, base_path(dir_));
    for (std::uint32_t id : patches) std::filesystem::remove(patch_path(dir_, id));

    files_.emplace(0, detail::File(base_path(dir_), O_RDONLY));
    for (BlockId k = 0; k < index_.size(); ++k)
      index_[k] = IndexEntry{0, base_record_offset(cfg_, k), static_cast<std::uint32_t>(block_payload_bytes(cfg_)),
                             blocks[k].version};
    current_patch_ = 0;
    current_end_ = 0;
    const std::uint64_t after = std::filesystem::file_size(base_path(dir_));
    return static_cast<std::int64_t>(before) - static_cast<std::int64_t>(after);
  }

 private:
  void check_block(BlockId k) const {
    if (k >= index_.size())
      throw std::out_of_range("block " + std::to_string(k) + " outside store of " + std::to_string(index_.size()));
  }

  BlockPayload read_locked(BlockId k) {
    // Only called with mu_ held and no concurrent appends.
    const IndexEntry e = index_[k];
    BlockPayload out{k, e.version, std::vector<float>(block_payload_floats(cfg_))};
    file(e.file_id).pread_all(out.values.data(), e.size, e.offset);
    return out;
  }

  const detail::File& file(std::uint32_t id) const {
    auto it = files_.find(id);
    if (it == files_.end()) {
      const auto path = id == 0 ? base_path(dir_) : patch_path(dir_, id);
      it = files_.emplace(id, detail::File(path, O_RDONLY)).first;
    }
    return it->second;
  }

  void write_patch_header(const detail::File& f, std::uint32_t id) const {
    SegmentHeader h;
    std::memcpy(h.magic, kPatchMagic, 4);
    h.kind = SegmentKind::patch;
    h.dim = cfg_.dim;
    h.n = cfg_.n_primitives;
    h.block_size = cfg_.block_size;
    h.file_id = id;
    h.k_blocks = cfg_.k_blocks();
    f.pwrite_all(detail::encode_header(h).data(), kSegmentHeaderBytes, 0);
  }

  void roll_segment() {
    const std::uint32_t id = current_patch_ + 1;
    detail::File f(patch_path(dir_, id), O_RDWR | O_CREAT | O_TRUNC);
    write_patch_header(f, id);
    files_.erase(id);
    files_.emplace(id, std::move(f));
    current_patch_ = id;
    current_end_ = kSegmentHeaderBytes;
  }

  std::filesystem::path dir_;
  StoreOptions options_;
  TableConfig cfg_;
  mutable std::mutex mu_;
  Index index_;
  mutable std::map<std::uint32_t, detail::File> files_;
  std::uint32_t current_patch_ = 0;
  std::uint64_t current_end_ = 0;
  mutable StoreStats stats_;
};

}  // namespace tidal
