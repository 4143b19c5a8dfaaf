#include "memeclip/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <boost/crc.hpp>

#include "memeclip/error.hpp"

namespace memeclip::container {

namespace {

template <typename U>
void append_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
}

template <typename U>
U load_le(const char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

std::uint32_t crc_of(std::string_view bytes) {
  return crc32(std::as_bytes(std::span(bytes.data(), bytes.size())));
}

}  // namespace

std::uint32_t crc32(std::span<const std::byte> bytes) noexcept {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

Writer::Writer(std::string_view magic, const nlohmann::json& header) {
  const std::string text = header.dump();
  buffer_.append(magic);
  append_le<std::uint32_t>(buffer_, static_cast<std::uint32_t>(text.size()));
  buffer_.append(text);
}

void Writer::put_u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
void Writer::put_u32(std::uint32_t v) { append_le(buffer_, v); }
void Writer::put_i16(std::int16_t v) { append_le(buffer_, static_cast<std::uint16_t>(v)); }
void Writer::put_f32(float v) { append_le(buffer_, std::bit_cast<std::uint32_t>(v)); }
void Writer::put_f64(double v) { append_le(buffer_, std::bit_cast<std::uint64_t>(v)); }
void Writer::put_bytes(std::string_view bytes) { buffer_.append(bytes); }

std::string Writer::finish_to_bytes() {
  if (!finished_) {
    append_le<std::uint32_t>(buffer_, crc_of(buffer_));
    finished_ = true;
  }
  return buffer_;
}

void Writer::finish(const std::filesystem::path& path) {
  const std::string bytes = finish_to_bytes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorCode::io, "write to '" + path.string() + "' failed");
}

Reader::Reader(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path.string() + "'");
  bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::io, "read of '" + path.string() + "' failed");
  parse(magic);
}

Reader::Reader(std::string bytes, std::string_view magic) : bytes_(std::move(bytes)) { parse(magic); }

void Reader::parse(std::string_view magic) {
  if (bytes_.size() < magic.size() || std::string_view(bytes_).substr(0, magic.size()) != magic) {
    fail(ErrorCode::format, "bad magic: expected '" + std::string(magic) + "'");
  }
  if (bytes_.size() < magic.size() + 8) fail(ErrorCode::corruption, "file truncated");
  payload_end_ = bytes_.size() - 4;
  const std::uint32_t stored = load_le<std::uint32_t>(bytes_.data() + payload_end_);
  if (stored != crc_of(std::string_view(bytes_).substr(0, payload_end_))) {
    fail(ErrorCode::corruption, "checksum mismatch");
  }
  cursor_ = magic.size();
  const std::uint32_t header_len = get_u32();
  const char* text = take(header_len);
  try {
    header_ = nlohmann::json::parse(text, text + header_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("malformed header: ") + e.what());
  }
  if (!header_.is_object()) fail(ErrorCode::format, "header is not a JSON object");
}

const char* Reader::take(std::size_t n) {
  if (n > payload_end_ - cursor_) fail(ErrorCode::corruption, "payload truncated");
  const char* p = bytes_.data() + cursor_;
  cursor_ += n;
  return p;
}

std::uint8_t Reader::get_u8() { return static_cast<std::uint8_t>(*take(1)); }
std::uint32_t Reader::get_u32() { return load_le<std::uint32_t>(take(4)); }
std::int16_t Reader::get_i16() { return static_cast<std::int16_t>(load_le<std::uint16_t>(take(2))); }
float Reader::get_f32() { return std::bit_cast<float>(load_le<std::uint32_t>(take(4))); }
double Reader::get_f64() { return std::bit_cast<double>(load_le<std::uint64_t>(take(8))); }

std::string Reader::get_bytes(std::size_t n) {
  const char* p = take(n);
  return std::string(p, n);
}

void Reader::expect_end() const {
  if (cursor_ != payload_end_) fail(ErrorCode::corruption, "trailing bytes after payload");
}

}  // namespace memeclip::container
