#ifndef FLOQSENSE_RANDOM_HPP
#define FLOQSENSE_RANDOM_HPP

#include <array>
#include <cstdint>
#include <random>

namespace floqsense {

// Engine and conversion are fully specified by the standard, so draws are
// bit-identical across platforms (unlike std::uniform_real_distribution).
using Engine = std::mt19937_64;

/// Uniform double on [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Uniform double on [lo, hi).
inline double uniform(Engine& engine, double lo, double hi) {
  return lo + (hi - lo) * uniform01(engine);
}

/// Seed for task `index` of a run with `base` seed. Stable under std::seed_seq.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace floqsense

#endif
