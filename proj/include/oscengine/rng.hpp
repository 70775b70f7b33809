#pragma once

#include <cstdint>

namespace oscengine {

/// Counter-based stream: draw n of stream (key, stream_id) is a pure function of
/// the three integers, so per-cycle results do not depend on scheduling.
class CounterRng {
 public:
  CounterRng(std::uint64_t key, std::uint64_t stream_id) noexcept
      : base_(mix(key ^ mix(stream_id + 0x9e3779b97f4a7c15ULL))) {}

  std::uint64_t next_u64() noexcept { return mix(base_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  // SplitMix64 finalizer.
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

}  // namespace oscengine
