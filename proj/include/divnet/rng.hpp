#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace divnet {

// Seeded generator with platform-independent draws. The standard
// distributions are implementation-defined, so uniform and normal variates
// are derived from the raw engine output directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (no cached second variate, so the stream
  // position depends only on the number of calls).
  double normal();

  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

}  // namespace divnet
