#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace tiltop {

/// Counter-based generator: value i of key k is a pure function of (k, i),
/// so any draw is reproducible without replaying a sequence. Mixing uses
/// the SplitMix64 finalizer.
class CounterRng
{
public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static constexpr std::uint64_t mix(std::uint64_t z)
  {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Derive a child key, e.g. per combination and trial index.
  static constexpr std::uint64_t derive(std::uint64_t key, std::initializer_list<std::uint64_t> path)
  {
    for(auto p : path) key = mix(key ^ mix(p + 0x632be59bd9b4e019ULL));
    return key;
  }

  std::uint64_t bits(std::uint64_t counter) const { return mix(mix(key_) ^ counter); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform(std::uint64_t counter) const
  {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const { return lo + (hi - lo) * uniform(counter); }

  std::uint64_t key() const { return key_; }

private:
  std::uint64_t key_;
};

} // namespace tiltop
