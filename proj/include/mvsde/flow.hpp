#pragma once

#include <vector>

#include "mvsde/grid.hpp"
#include "mvsde/measure.hpp"

namespace mvsde {

// Time-gridded curve of finitely supported measures, with the per-time
// interaction means mu_t(h) and k-th moments recorded alongside so the
// integrator never has to re-average large empirical clouds.
struct MeasureFlow {
  TimeGrid grid;
  std::vector<ParticleMeasure> measures;  // n_steps + 1 entries
  int obs_dim = 0;
  std::vector<double> h_means;    // (n_steps + 1) x obs_dim
  std::vector<double> k_moments;  // per grid point, order recorded in k_order
  double k_order = 0.0;

  Span interaction_mean(int j) const {
    return Span(h_means.data() + std::size_t(j) * std::size_t(obs_dim), std::size_t(obs_dim));
  }

  // Constant-in-time flow gamma_t = mu.
  static MeasureFlow constant(const TimeGrid& grid, const ParticleMeasure& mu, const ObsFn& h,
                              int obs_dim, MomentOrder k);
  // Wraps explicit per-time measures, computing the summaries.
  static MeasureFlow from_measures(const TimeGrid& grid, std::vector<ParticleMeasure> measures,
                                   const ObsFn& h, int obs_dim, MomentOrder k);
};

struct FlowDistance {
  double value = 0.0;
  bool surrogate_used = false;  // some time slice fell back to the surrogate
};

// Exponentially discounted sup distance sup_t e^{-lambda t} dist(gamma_t,
// gamma'_t). Per slice, dist is the weighted total variation whenever that is
// meaningful for the pair (equal supports, or both measures small); between
// large empirical clouds with distinct supports the total variation
// saturates, so a surrogate is substituted and flagged:
//   |k-moment gap| + bounded-Lipschitz estimate on the atom clouds,
// the latter from the index pairing for equally sized uniform clouds (the
// common-random-numbers case), the quantile coupling in one dimension, and
// the independent coupling otherwise.
FlowDistance flow_distance(const MeasureFlow& f1, const MeasureFlow& f2, double lambda,
                           MomentOrder k);

// Slice-level surrogate pieces, exposed for reuse by the flow solvers.
double bounded_lipschitz_estimate(const ParticleMeasure& mu, const ParticleMeasure& nu);

}  // namespace mvsde
