#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace svelift {

/// 64-bit finalizer used to derive independent stream seeds. The output
/// is a bijective, well-mixed function of the input, so distinct
/// (seed, index) pairs map to distinct engine seeds.
inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// A single random stream with hand-rolled variate transforms. The
/// transforms (not just the engine) are pinned here because the standard
/// library's distribution objects are implementation-defined: using them
/// would break bit-identical reproducibility across toolchains.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  /// Raw 64 bits from the engine.
  std::uint64_t bits() { return engine_(); }

  /// Uniform draw in the half-open interval (0, 1]. The open lower end
  /// makes log(uniform()) always finite.
  double uniform() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Exponential variate with the given rate (> 0).
  double exponential(double rate) { return -std::log(uniform()) / rate; }

  /// Index in [0, weights.size()) drawn proportionally to the weights.
  /// Weights must be nonnegative with positive sum.
  template <class Container>
  std::size_t categorical(const Container& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double acc = 0.0;
    std::size_t last = 0;
    std::size_t i = 0;
    for (double w : weights) {
      acc += w;
      if (u <= acc && w > 0.0) return i;
      if (w > 0.0) last = i;
      ++i;
    }
    return last;  // guards against accumulated round-off at u ~ total
  }

 private:
  std::mt19937_64 engine_;
};

/// Factory of independent substreams keyed by (seed, index). Parallel
/// ensembles give path i the stream stream(i), so results do not depend
/// on how paths are scheduled over threads.
class RngFamily {
 public:
  explicit RngFamily(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  Stream stream(std::uint64_t index) const {
    return Stream(mix64(mix64(seed_) ^ (0x632BE59BD9B4E019ULL * (index + 1))));
  }

 private:
  std::uint64_t seed_;
};

}  // namespace svelift
