#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace stars {

// Deterministic random stream. All sampling goes through hand-rolled
// transforms on top of mt19937_64 so that sequences are bit-identical across
// standard libraries (std::*_distribution output is implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed);

  // Derive an independent stream from a master seed, a stream name, and an
  // index. Used to give data sampling, noise draws, and initialization their
  // own streams that can be varied independently.
  static Rng substream(uint64_t seed, std::string_view name, uint64_t index = 0);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Marsaglia's polar method (caches the spare deviate).
  double normal();

  // Exact state capture for checkpointing.
  std::string serialize() const;
  static Rng deserialize(const std::string& text);

 private:
  Rng() = default;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

uint64_t splitmix64(uint64_t& state);
uint64_t fnv1a64(std::string_view text);

}  // namespace stars
