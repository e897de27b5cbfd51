#include "mvsde/rng.hpp"

namespace mvsde {

void CounterRng::box_muller(std::uint64_t u64a, std::uint64_t u64b, double& z0, double& z1) {
  const double u1 = to_unit_pos(u64a);
  const double u2 = to_unit(u64b);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  z0 = r * std::cos(th);
  z1 = r * std::sin(th);
}

double CounterRng::normal(std::uint64_t path, std::uint32_t step, std::uint32_t slot) const {
  const auto r = raw(path, step, slot >> 1);
  double z0, z1;
  box_muller(pick64(r, 0), pick64(r, 1), z0, z1);
  return (slot & 1u) ? z1 : z0;
}

void CounterRng::normals(std::uint64_t path, std::uint32_t step, MutSpan out) const {
  const std::size_t n = out.size();
  for (std::size_t base = 0; base < n; base += 2) {
    const auto r = raw(path, step, std::uint32_t(base >> 1));
    double z0, z1;
    box_muller(pick64(r, 0), pick64(r, 1), z0, z1);
    out[base] = z0;
    if (base + 1 < n) out[base + 1] = z1;
  }
}

}  // namespace mvsde
