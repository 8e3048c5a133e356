#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace aslora {

// Training scalar type. The default build uses 32-bit floats; defining
// ASLORA_REAL_DOUBLE (see the *64 CMake targets) switches the whole engine
// to 64-bit for finite-difference verification.
#ifdef ASLORA_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<int>;

/// Tensor shape violation (mismatched or invalid dimensions).
class ShapeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Violated operation precondition or invariant.
class ContractError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid runtime input (out-of-vocab token, oversize sequence).
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value encountered during training.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Filesystem or serialization failure.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// FNV-1a over raw bytes; used for config hashes and frozen-weight digests.
uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull);
uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull);

} // namespace aslora
