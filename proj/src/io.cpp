#include "blinklight/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <zlib.h>

#include "blinklight/common.hpp"

namespace blinklight::io {

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

void ByteWriter::put_raw(std::span<const std::uint8_t> data) {
  bytes_.insert(bytes_.end(), data.begin(), data.end());
}

void ByteWriter::put_u32(std::uint32_t value) {
  std::uint8_t buf[4];
  std::memcpy(buf, &value, sizeof buf);
  put_raw(buf);
}

void ByteWriter::put_u64(std::uint64_t value) {
  std::uint8_t buf[8];
  std::memcpy(buf, &value, sizeof buf);
  put_raw(buf);
}

void ByteWriter::put_f64(double value) { put_u64(std::bit_cast<std::uint64_t>(value)); }

void ByteWriter::put_string(std::string_view value) {
  put_u32(static_cast<std::uint32_t>(value.size()));
  put_raw({reinterpret_cast<const std::uint8_t*>(value.data()), value.size()});
}

ByteReader::ByteReader(std::span<const std::uint8_t> data, std::string what)
    : data_(data), what_(std::move(what)) {}

void ByteReader::fail(std::string_view message) const {
  throw ParseError(fmt::format("{}: {} at byte offset {}", what_, message, offset_));
}

std::span<const std::uint8_t> ByteReader::get_raw(std::size_t count) {
  if (count > remaining()) fail(fmt::format("truncated (need {} bytes, have {})", count, remaining()));
  auto out = data_.subspan(offset_, count);
  offset_ += count;
  return out;
}

std::uint32_t ByteReader::get_u32() {
  std::uint32_t v;
  std::memcpy(&v, get_raw(4).data(), 4);
  return v;
}

std::uint64_t ByteReader::get_u64() {
  std::uint64_t v;
  std::memcpy(&v, get_raw(8).data(), 8);
  return v;
}

double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

std::string ByteReader::get_string() {
  const auto n = get_u32();
  auto raw = get_raw(n);
  return {reinterpret_cast<const char*>(raw.data()), raw.size()};
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(
      ::crc32(crc, data.data(), static_cast<uInt>(data.size())));
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string format_double(double value) { return fmt::format("{}", value); }

double parse_double(std::string_view field, std::string_view context) {
  // from_chars rejects a leading '+', which no writer here produces.
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(fmt::format("{}: cannot parse '{}' as a number", context, field));
  }
  return value;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

}  // namespace blinklight::io
