#pragma once

// Byte-level helpers shared by the binary containers (checkpoints, datasets)
// and the stage manifests. All multi-byte values are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace blinklight::io {

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
 public:
  void put_raw(std::span<const std::uint8_t> data);
  void put_u32(std::uint32_t value);
  void put_u64(std::uint64_t value);
  void put_f64(double value);
  /// u32 length prefix followed by the raw characters.
  void put_string(std::string_view value);

  const Bytes& bytes() const noexcept { return bytes_; }
  Bytes take() && noexcept { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

/// Sequential reader over a byte buffer. Every getter throws ParseError naming
/// `what` and the byte offset when the buffer is exhausted.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string what);

  std::span<const std::uint8_t> get_raw(std::size_t count);
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  double get_f64();
  std::string get_string();

  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return data_.size() - offset_; }
  [[noreturn]] void fail(std::string_view message) const;

 private:
  std::span<const std::uint8_t> data_;
  std::string what_;
  std::size_t offset_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_text(const std::filesystem::path& path, std::string_view text);

std::uint32_t crc32(std::span<const std::uint8_t> data);
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
/// Strict double parse of a whole field; throws ParseError on trailing junk.
double parse_double(std::string_view field, std::string_view context);

/// Splits one CSV line on commas. No quoting support; none of the formats
/// written by this project quote fields.
std::vector<std::string_view> split_csv_line(std::string_view line);

}  // namespace blinklight::io
