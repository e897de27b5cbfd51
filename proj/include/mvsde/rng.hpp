#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "mvsde/linalg.hpp"

namespace mvsde {

// Philox4x32-10 block cipher. A (counter, key) pair maps to four 32-bit
// words, so every draw is addressed rather than sequenced: any (path, step,
// slot) value can be produced independently, in any order, on any thread.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
      ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
             std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

// Stream tags keep logically distinct draw families on disjoint counters.
enum class RngStream : std::uint32_t {
  increments = 1,  // Brownian increments, addressed by (path, step, slot)
  init_draws = 2,  // initial-state uniforms, addressed by path
  probes = 3,      // validator probe sampling
  scratch = 4,
};

// Addressed uniform/normal draws keyed by (seed, stream).
//
// The normal kernel is deliberately out-of-line: the Box-Muller sin/cos pair
// is subject to call-site fusion (sincos combining), so inlining it into
// several translation units can produce draws that differ in the last ulp
// between callers. A single compiled instance keeps every consumer of a
// (seed, path, step, slot) address bit-identical.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, RngStream stream)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
        stream_(std::uint32_t(stream)) {}

  // Uniform in [0,1).
  double uniform(std::uint64_t path, std::uint32_t step, std::uint32_t slot) const {
    const auto r = raw(path, step, slot >> 1);
    return to_unit(pick64(r, slot & 1u));
  }

  // Standard normal at the addressed slot.
  double normal(std::uint64_t path, std::uint32_t step, std::uint32_t slot) const;

  // Fills out[0..n) with the normals at slots 0..n-1 of (path, step).
  void normals(std::uint64_t path, std::uint32_t step, MutSpan out) const;

 private:
  std::array<std::uint32_t, 4> raw(std::uint64_t path, std::uint32_t step,
                                   std::uint32_t block) const {
    return Philox4x32::block(
        {std::uint32_t(path), step, block, stream_ ^ std::uint32_t(path >> 32)}, key_);
  }

  static std::uint64_t pick64(const std::array<std::uint32_t, 4>& r, unsigned which) {
    return which == 0 ? (std::uint64_t(r[0]) << 32) | r[1]
                      : (std::uint64_t(r[2]) << 32) | r[3];
  }

  // 53-bit mantissa mapping; [0,1).
  static double to_unit(std::uint64_t x) { return double(x >> 11) * 0x1.0p-53; }
  // (0,1], safe for log.
  static double to_unit_pos(std::uint64_t x) {
    return double((x >> 11) + 1) * 0x1.0p-53;
  }

  static void box_muller(std::uint64_t u64a, std::uint64_t u64b, double& z0, double& z1);

  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_;
};

}  // namespace mvsde
