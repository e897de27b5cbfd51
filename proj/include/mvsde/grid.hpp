#pragma once

#include <cmath>
#include <stdexcept>

namespace mvsde {

// Uniform time grid on [0, T]; t_j = j * dt exactly reproducible.
struct TimeGrid {
  double horizon = 1.0;
  int n_steps = 1;

  double dt() const { return horizon / n_steps; }
  double time(int j) const { return j * dt(); }

  void validate() const {
    if (!(horizon > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be > 0");
    if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
  }

  // Index of a grid time; rejects times off the grid.
  int index_of(double t) const {
    const long j = std::lround(t / dt());
    if (j < 0 || j > n_steps || std::fabs(t - double(j) * dt()) > 1e-9 * std::max(1.0, horizon))
      throw std::invalid_argument("TimeGrid: t is not a grid point");
    return int(j);
  }

  bool operator==(const TimeGrid&) const = default;
};

}  // namespace mvsde
