#pragma once

#include "mvsde/sde.hpp"

namespace mvsde {

struct PicardOptions {
  int max_iter = 20;
  double tol = 1e-3;
  double lambda = 0.0;  // <= 0: use 10 / horizon
  int threads = 0;
  bool validate_model = true;  // spot-check the structural bounds, warn only
  H2ProbeSpec probe{};
  // When positive, run exactly this many iterations instead of stopping at
  // tol (convergence is still reported against tol). Coupled flow solves at
  // different initial laws must sit at the same iteration depth, otherwise
  // their fixed-point residuals decouple and difference estimators divided
  // by a small eps inherit an O(residual/eps) error.
  int force_iterations = 0;
};

struct PicardDiag {
  std::vector<double> distances;  // successive-iterate flow distances
  bool converged = false;
  int iterations = 0;
  std::int64_t blowups = 0;     // in the final iteration
  bool h2_warning = false;
  bool surrogate_distance = false;
};

struct PicardResult {
  MeasureFlow flow;
  PicardDiag diag;
};

// Solves the self-consistency fixed point: starting from the constant flow
// gamma_t = mu0, repeatedly simulates the decoupled equation against the
// current flow and replaces it by the resulting empirical flow, under common
// random numbers across iterations (so the iteration is a deterministic
// contraction of the interaction-mean sequence, not a noisy one). Stops when
// the discounted sup distance between successive iterates drops below tol.
//
// Successive empirical iterates have distinct supports, so the stopping
// distance is the surrogate slice metric (k-moment gap plus the index-paired
// bounded-Lipschitz estimate); the flow invariant measures[0] == mu0 holds
// exactly, the interaction mean at t=0 being taken from the prescribed law
// rather than the initial draws.
PicardResult picard_flow(const DriftModel& model, const InitialLaw& mu0, const TimeGrid& grid,
                         std::int64_t n_paths, std::uint64_t seed, const PicardOptions& opts = {});

inline PicardResult picard_flow(const DriftModel& model, const ParticleMeasure& mu0,
                                const TimeGrid& grid, std::int64_t n_paths, std::uint64_t seed,
                                const PicardOptions& opts = {}) {
  return picard_flow(model, InitialLaw(mu0), grid, n_paths, seed, opts);
}

struct ParticleOptions {
  int threads = 0;
  // Optional particle -> RNG-stream permutation; the empirical flow is
  // invariant under any permutation (exchangeability).
  const std::vector<std::uint32_t>* stream_permutation = nullptr;
};

// Direct mean-field system: N coupled particles, each seeing the
// instantaneous empirical measure of the whole population. Independent
// cross-check of picard_flow; with the same seed and an interaction-free
// model it reproduces simulate_decoupled paths exactly.
MeasureFlow particle_flow(const DriftModel& model, const ParticleMeasure& mu0,
                          const TimeGrid& grid, std::int64_t n_particles, std::uint64_t seed,
                          const ParticleOptions& opts = {});

}  // namespace mvsde
