#pragma once

#include <cstdint>
#include <random>

namespace dsac {

using Rng = std::mt19937_64;

// Independent consumers of randomness within one run. Each gets its own
// stream so changing how much one consumes never shifts another.
enum class SeedStream : std::uint64_t {
  EnvBuild = 1,
  EnvReset,
  Sticky,
  Replay,
  NetworkInit,
  Action,
  Downsample,
  Evaluation,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class SeedSequence {
 public:
  explicit SeedSequence(std::uint64_t master) : master_(master) {}

  std::uint64_t derive(SeedStream stream, std::uint64_t counter = 0) const {
    return splitmix64(splitmix64(master_ ^ splitmix64(static_cast<std::uint64_t>(stream))) + counter);
  }

  Rng rng(SeedStream stream, std::uint64_t counter = 0) const { return Rng(derive(stream, counter)); }

  std::uint64_t master() const { return master_; }

 private:
  std::uint64_t master_;
};

}  // namespace dsac
