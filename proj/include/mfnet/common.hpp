#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfnet {

inline constexpr const char* kVersion = "0.1.0";

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/layer shape contract violations.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Unsupported file content (WAV channel count, rate, encoding).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad configuration files, manifests, CLI values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (training abort, debug mode).
class NumericError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { kBadMagic, kBadVersion, kTruncated, kShapeMismatch, kConfigMismatch };

  CheckpointError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG with stdlib-independent output so seeded runs are
// bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed)) {}

  uint64_t next_u64() {
    // xorshift* over a splitmix-scrambled state
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int64_t uniform_int(int64_t n) {
    return n <= 1 ? 0 : static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

namespace detail {
inline std::atomic<int>& debug_finite_flag() {
  static std::atomic<int> flag{-1};  // -1 = read env on first use
  return flag;
}
}  // namespace detail

inline void set_debug_check_finite(bool on) { detail::debug_finite_flag().store(on ? 1 : 0); }

inline bool debug_check_finite_enabled() {
  int v = detail::debug_finite_flag().load();
  if (v < 0) {
    const char* env = std::getenv("MFNET_DEBUG_NAN");
    v = (env && env[0] != '\0' && env[0] != '0') ? 1 : 0;
    detail::debug_finite_flag().store(v);
  }
  return v == 1;
}

// Worker-thread bound: MFNET_THREADS when set, otherwise hardware concurrency.
inline int worker_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("MFNET_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v >= 1 && v <= 256) return static_cast<int>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return n;
}

// Splits [0, n) into contiguous chunks, one per worker. Chunking is a pure
// function of n and the thread bound, so results are deterministic as long as
// fn writes disjoint outputs.
template <typename Fn>
void parallel_for(int64_t n, const Fn& fn) {
  const int threads = worker_threads();
  if (threads <= 1 || n < 2) {
    if (n > 0) fn(int64_t{0}, n);
    return;
  }
  const int used = static_cast<int>(std::min<int64_t>(threads, n));
  const int64_t chunk = (n + used - 1) / used;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(used) - 1);
  for (int i = 1; i < used; ++i) {
    const int64_t b = i * chunk;
    const int64_t e = std::min<int64_t>(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(int64_t{0}, std::min<int64_t>(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace mfnet
