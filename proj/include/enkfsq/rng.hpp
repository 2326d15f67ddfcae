#pragma once

#include <cstdint>
#include <limits>

namespace enkfsq::rng {

// SplitMix64 (Steele, Lea & Flood 2014). Cheap to construct, so every
// (stream, key...) tuple gets its own generator and draws never depend on
// the order in which members, rows or runs are visited.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Named stream families. Values are part of the reproducibility contract:
/// changing one changes every output that depends on it.
enum class Stream : std::uint64_t {
  ModelNoise = 0x4d4f444c,
  InitPerturbation = 0x494e4954,
  ObservationNoise = 0x4f425356,
  ObsPerturbation = 0x50455254,
  Climatology = 0x434c494d,
  Demo = 0x44454d4f,
};

constexpr std::uint64_t mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Generator for the stream `family` of run `seed`, addressed by up to three
/// integer keys (e.g. analysis step, observation site, member).
inline SplitMix64 stream(std::uint64_t seed, Stream family, std::uint64_t k0 = 0,
                         std::uint64_t k1 = 0, std::uint64_t k2 = 0) noexcept {
  std::uint64_t h = mix(seed + 0x9e3779b97f4a7c15ULL);
  h = mix(h ^ static_cast<std::uint64_t>(family));
  h = mix(h ^ (k0 + 0x632be59bd9b4e019ULL));
  h = mix(h ^ (k1 + 0x85157af5ULL));
  h = mix(h ^ (k2 + 0xd6e8feb86659fd93ULL));
  return SplitMix64(h);
}

}  // namespace enkfsq::rng
