#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace msf {

inline constexpr const char* kVersion = "0.1.0";

// Configuration / input problems. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Protocol source or move-sequence problems. CLI exit code 2.
struct ProtocolError : ConfigError {
  using ConfigError::ConfigError;
};

// Numerical preconditions violated (non-finite input, closed gap, ...).
// CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All floating-point output goes through this: 17 significant digits,
// so equal doubles serialize to equal bytes.
std::string fmt_g17(double x);

// Name of the generator backing every random draw; recorded in run metadata.
inline constexpr const char* kRngAlgorithm = "mt19937_64/shift53";

// Uniform double in [0, 1) from a raw 64-bit word (top 53 bits), independent
// of any library distribution implementation.
inline double canonical_u53(std::uint64_t word) {
  return static_cast<double>(word >> 11) * (1.0 / 9007199254740992.0);
}

// FNV-1a over an arbitrary byte string; used to derive per-cell sweep seeds.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull);
std::uint64_t derive_seed(std::uint64_t base, const std::string& axis, double value);

// Writes content to path atomically (temp file in the same directory + rename).
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);

}  // namespace msf
