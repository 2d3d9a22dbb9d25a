#include <doctest.h>

#include <cmath>
#include <limits>

#include "blinklight/common.hpp"
#include "blinklight/io.hpp"

using namespace blinklight;

TEST_SUITE("io") {
  TEST_CASE("byte writer and reader round-trip") {
    io::ByteWriter w;
    w.put_u32(0xDEADBEEF);
    w.put_u64(1ULL << 40);
    w.put_f64(-0.1);
    w.put_string("clip_000");
    const auto bytes = std::move(w).take();
    CHECK(bytes.size() == 4 + 8 + 8 + 4 + 8);
    CHECK(bytes[0] == 0xEF);  // little-endian

    io::ByteReader r(bytes, "test");
    CHECK(r.get_u32() == 0xDEADBEEF);
    CHECK(r.get_u64() == (1ULL << 40));
    CHECK(r.get_f64() == -0.1);
    CHECK(r.get_string() == "clip_000");
    CHECK(r.remaining() == 0);
    CHECK_THROWS_AS(r.get_u32(), ParseError);
  }

  TEST_CASE("truncated string length is reported with its offset") {
    io::ByteWriter w;
    w.put_u32(100);
    const auto& bytes = w.bytes();
    io::ByteReader r(bytes, "blob");
    try {
      r.get_string();
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("blob") != std::string::npos);
    }
  }

  TEST_CASE("checksums match published test vectors") {
    const std::string abc = "abc";
    CHECK(io::sha256_hex(abc) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::string digits = "123456789";
    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(digits.data()), digits.size());
    CHECK(io::crc32(bytes) == 0xCBF43926u);
  }

  TEST_CASE("doubles format to shortest round-trip text") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9, 0.0}) {
      CHECK(io::parse_double(io::format_double(v), "t") == v);
    }
    CHECK(io::format_double(0.5) == "0.5");
    CHECK(std::isnan(io::parse_double(io::format_double(std::numeric_limits<double>::quiet_NaN()), "t")));
  }

  TEST_CASE("parse_double rejects junk") {
    CHECK_THROWS_AS(io::parse_double("1.0x", "t"), ParseError);
    CHECK_THROWS_AS(io::parse_double("", "t"), ParseError);
    CHECK_THROWS_AS(io::parse_double("abc", "t"), ParseError);
  }

  TEST_CASE("csv split keeps empty fields") {
    const auto f = io::split_csv_line("a,,b,");
    REQUIRE(f.size() == 4);
    CHECK(f[0] == "a");
    CHECK(f[1].empty());
    CHECK(f[3].empty());
  }

  TEST_CASE("mix_seed separates neighbouring indices") {
    CHECK(mix_seed(0, 0) != mix_seed(0, 1));
    CHECK(mix_seed(1, 0) != mix_seed(0, 1));
    static_assert(mix_seed(5, 3) == mix_seed(5, 3));
  }
}
