#pragma once

#include <cstdint>
#include <string_view>

namespace csvqa {

// Counter-based splittable generator built on the SplitMix64 finalizer:
// output i of a stream with key K is mix64(K + (i+1) * GAMMA). Streams for
// different purposes (matrix sampling, scene generation, parameter init,
// shuffling, ...) are derived with split(), so determinism does not depend
// on evaluation order. Pure 64-bit integer arithmetic throughout; the same
// seed yields the same sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent child stream. Splitting with the same tag twice gives the
  // same stream; different tags give statistically independent streams.
  Rng split(std::uint64_t tag) const;
  Rng split(std::string_view tag) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1), 53 bits of precision.
  double next_double();
  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double next_gaussian();
  // Uniform integer in [0, bound), unbiased (rejection sampling). bound >= 1.
  std::uint64_t next_below(std::uint64_t bound);

  std::uint64_t key() const { return key_; }

  static std::uint64_t mix64(std::uint64_t z);
  static std::uint64_t hash_string(std::string_view s);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace csvqa
