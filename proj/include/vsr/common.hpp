#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vsr {

// Error taxonomy. Contract violations throw; nothing is silently patched up.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand extents do not match the operation.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// A configuration struct fails its own invariants.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A softmax row with zero allowed keys. Always a mask-construction bug upstream.
class DegenerateRowError : public Error {
 public:
  explicit DegenerateRowError(const std::string& msg) : Error(msg) {}
};

// Block pooling over a block with no member tokens.
class EmptyBlockError : public Error {
 public:
  explicit EmptyBlockError(const std::string& msg) : Error(msg) {}
};

// Internal state violated a structural invariant (e.g. cache retention rules).
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

#define VSR_REQUIRE(cond, exc, msg)        \
  do {                                     \
    if (!(cond)) throw exc(msg);           \
  } while (0)

// FNV-1a 64-bit, used for fixture manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace vsr
