#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace blinklight {

inline constexpr std::size_t kJointCount = 18;
inline constexpr std::size_t kChannelCount = 2 * kJointCount;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (JSON, CSV, binary container).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed document whose content violates the expected schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Input that is valid but carries no usable information (e.g. a clip with no
/// confident joints, a pupil trace that is entirely invalid).
class UnusableDataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or other numeric failures during training/inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Statistic that is undefined for the given input (zero variance).
class UndefinedStatisticError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument / configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure or missing artifact.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Artifact hash does not match the manifest that produced it.
class ProvenanceError : public Error {
 public:
  using Error::Error;
};

/// SplitMix64 finalizer. Used to derive independent sub-seeds from a master
/// seed and an index, so that per-item random streams do not depend on
/// iteration or thread order.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace blinklight
