#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace scnet {

/// Random engine used everywhere in the library.
using Engine = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, used to turn stream labels into keys.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic fan-out of one 64-bit seed into independent sub-streams.
///
/// A stream is identified by a label (e.g. "source", "noise") and a tuple of
/// integer keys (experiment, delta index, resolution, sample id, ...). The same
/// (seed, label, keys) always yields the same engine state, regardless of the
/// order in which streams are requested, so per-sample work can run in any
/// order or in parallel without changing results.
class SeedSequence {
 public:
  explicit SeedSequence(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t key(std::string_view label,
                    std::initializer_list<std::uint64_t> keys = {}) const noexcept {
    std::uint64_t h = detail::splitmix64(seed_ ^ detail::hash_label(label));
    for (std::uint64_t k : keys) h = detail::splitmix64(h ^ detail::splitmix64(k));
    return h;
  }

  Engine stream(std::string_view label,
                std::initializer_list<std::uint64_t> keys = {}) const {
    std::seed_seq seq{static_cast<std::uint32_t>(key(label, keys)),
                      static_cast<std::uint32_t>(key(label, keys) >> 32)};
    return Engine(seq);
  }

 private:
  std::uint64_t seed_;
};

/// Standard normal draw. Kept as a free function so every module samples the
/// same way from an Engine.
inline double standard_normal(Engine& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Stable integer key for a real-valued parameter such as a noise level.
inline std::uint64_t real_key(double value) noexcept {
  return static_cast<std::uint64_t>(std::llround(value * 1e12));
}

}  // namespace scnet
