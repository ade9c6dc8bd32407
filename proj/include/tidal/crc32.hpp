#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace tidal {

// IEEE 802.3 CRC-32 (reflected polynomial 0xEDB88320).
class Crc32 {
 public:
  Crc32& update(std::span<const std::byte> bytes) {
    static const auto table = make_table();
    for (std::byte b : bytes) state_ = table[(state_ ^ static_cast<std::uint32_t>(b)) & 0xffu] ^ (state_ >> 8);
    return *this;
  }
  std::uint32_t value() const { return state_ ^ 0xffffffffu; }

  static std::uint32_t of(std::span<const std::byte> bytes) { return Crc32{}.update(bytes).value(); }

 private:
  static std::array<std::uint32_t, 256> make_table() {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int j = 0; j < 8; ++j) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }

  std::uint32_t state_ = 0xffffffffu;
};

}  // namespace tidal
