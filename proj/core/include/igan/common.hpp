#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace igan {

// Contract violations: bad shapes, invalid arguments, broken preconditions.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numeric failures: non-finite values, decomposition breakdowns.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing or unreadable datasets and files.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A gate on measurement quality failed (e.g. an under-trained classifier).
class CalibrationError : public std::runtime_error {
 public:
  explicit CalibrationError(const std::string& msg) : std::runtime_error(msg) {}
};

#define IGAN_CHECK(cond, msg)                     \
  do {                                            \
    if (!(cond)) throw ::igan::ContractError(msg); \
  } while (0)

#define IGAN_CHECK_NUMERIC(cond, msg)            \
  do {                                           \
    if (!(cond)) throw ::igan::NumericError(msg); \
  } while (0)

// FNV-1a over raw bytes; used for config hashes and extractor fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace igan
