#pragma once

// Shared framing for the on-disk formats (MEB1, MCP1, MCK1):
//   4-byte magic | u32 header length | JSON header | payload | u32 CRC-32
// All integers little-endian; CRC-32 (reflected, poly 0xEDB88320) covers
// everything before the trailing four bytes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

namespace memeclip::container {

std::uint32_t crc32(std::span<const std::byte> bytes) noexcept;

class Writer {
 public:
  Writer(std::string_view magic, const nlohmann::json& header);

  void put_u8(std::uint8_t v);
  void put_u32(std::uint32_t v);
  void put_i16(std::int16_t v);
  void put_f32(float v);
  void put_f64(double v);
  void put_bytes(std::string_view bytes);

  /// Appends the CRC and writes the buffer to `path`; throws io on failure.
  void finish(const std::filesystem::path& path);

  /// Appends the CRC and returns the complete byte image.
  std::string finish_to_bytes();

 private:
  std::string buffer_;
  bool finished_ = false;
};

class Reader {
 public:
  /// Loads `path`, checks magic (format error) and CRC (corruption error),
  /// and parses the JSON header.
  Reader(const std::filesystem::path& path, std::string_view magic);
  Reader(std::string bytes, std::string_view magic);

  const nlohmann::json& header() const noexcept { return header_; }

  std::uint8_t get_u8();
  std::uint32_t get_u32();
  std::int16_t get_i16();
  float get_f32();
  double get_f64();
  std::string get_bytes(std::size_t n);

  std::size_t remaining() const noexcept { return payload_end_ - cursor_; }

  /// Throws corruption if payload bytes remain unread.
  void expect_end() const;

 private:
  void parse(std::string_view magic);
  const char* take(std::size_t n);

  std::string bytes_;
  nlohmann::json header_;
  std::size_t cursor_ = 0;
  std::size_t payload_end_ = 0;
};

}  // namespace memeclip::container
