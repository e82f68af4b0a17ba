#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ialp {

using Real = double;
using ItemId = std::uint32_t;
using UserId = std::int64_t;
using Rng = std::mt19937_64;

// Left-padding marker accepted by the state encoder; masked out of attention.
inline constexpr ItemId kPaddingItem = std::numeric_limits<ItemId>::max();

using ItemSequence = std::vector<ItemId>;

// Base of every error the library throws. `kind()` is a short stable token
// used by the CLI for machine-parseable failure lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error("data", message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

class EnvError : public Error {
 public:
  explicit EnvError(const std::string& message) : Error("env", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

// Derives an independent 64-bit seed for stream `stream` of a master seed
// (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Real uniform01(Rng& rng) {
  return std::uniform_real_distribution<Real>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace ialp
