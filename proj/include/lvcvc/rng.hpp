#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace lvcvc {

/// Deterministic random source. All draws are derived from the mt19937_64
/// engine state alone (no hidden distribution state), so serializing the
/// engine is enough to resume a stream mid-run bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1): top 53 bits of one engine draw.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // One engine draw in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Modulo bias is negligible for n << 2^64 and keeps draw count fixed.
    return engine_() % n;
  }

  // Standard normal via Box-Muller; consumes exactly two engine draws.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

  // Independent child stream (e.g. per-utterance workers).
  Rng fork() { return Rng(engine_()); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lvcvc
