#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mbolab {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Error categories. The numeric values double as CLI exit codes where they overlap.
enum class ErrorCode : int {
  InvalidArgument = 1,
  Config = 2,
  Numerical = 3,
  Infeasible = 4,
  Io = 5,
  Unsupported = 6,
  Cache = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

using Vector = std::vector<double>;
/// Embedding coordinates; the torus uses the first two entries.
using Point = std::array<double, 3>;

/// Deterministic 64-bit generator (splitmix64 seeding + xoshiro256**).
/// Used instead of std distributions so that streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::array<std::uint64_t, 4> s_{};
};

/// FNV-1a, used for content hashes of graphs and cache keys.
class Fnv1a {
 public:
  void update(const void* data, std::size_t bytes);
  template <typename T>
  void update_value(const T& v) {
    update(&v, sizeof(T));
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace mbolab
