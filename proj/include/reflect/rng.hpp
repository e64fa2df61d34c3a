// Seedable RNG with named sub-streams so every stochastic stage of a run can
// be replayed independently of the others.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace reflect {

// splitmix64; used for seed derivation only.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derive a sub-stream seed from a run seed and a stream name.
inline std::uint64_t substream_seed(std::uint64_t run_seed, std::string_view name,
                                    std::uint64_t index = 0) {
  return mix64(run_seed ^ mix64(fnv1a(name) + index));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform double in [0,1), built from the top 53 bits of the engine output
  // so the value stream is identical across platforms.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace reflect
