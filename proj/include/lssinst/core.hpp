#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace lssinst {

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct HeadsMismatch : std::runtime_error {
  explicit HeadsMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NonPositiveDepth : std::runtime_error {
  explicit NonPositiveDepth(const std::string& what) : std::runtime_error(what) {}
};

struct LambdaOutOfRange : std::runtime_error {
  explicit LambdaOutOfRange(const std::string& what) : std::runtime_error(what) {}
};

struct NoHistory : std::runtime_error {
  explicit NoHistory(const std::string& what) : std::runtime_error(what) {}
};

struct SpecMismatch : std::runtime_error {
  explicit SpecMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NoGroundTruth : std::runtime_error {
  explicit NoGroundTruth(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidConfig : std::runtime_error {
  explicit InvalidConfig(std::string field, const std::string& what)
      : std::runtime_error(what), field(std::move(field)) {}
  std::string field;
};

/// Deterministic PRNG: xorshift64* engine with hand-rolled uniform/normal
/// conversion, so generated streams are identical across standard libraries
/// and platforms (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_seed_(seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    state_seed_ = seed;
    s_ = seed | 1;  // engine state must be nonzero
    for (int i = 0; i < 4; ++i) next_raw();  // decorrelate nearby seeds
  }

  std::uint64_t next_raw() {
    // xorshift64* — fully specified, no library dependence.
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_raw() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (pairs cached).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t seed() const { return state_seed_; }

 private:
  std::uint64_t state_seed_ = 0;
  std::uint64_t s_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  constexpr double two_pi = 6.283185307179586476925286766559;
  spare_ = r * std::sin(two_pi * u2);
  has_spare_ = true;
  return r * std::cos(two_pi * u2);
}

}  // namespace lssinst
