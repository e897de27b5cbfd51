#pragma once

#include "mvsde/eta.hpp"

namespace mvsde {

// Raised when a fixed-point stage fails to converge; carries the distance
// history of the offending iteration.
struct NonConvergenceError : std::runtime_error {
  NonConvergenceError(const std::string& stage, std::vector<double> history)
      : std::runtime_error("non-convergence in " + stage), distances(std::move(history)) {}
  std::vector<double> distances;
};

struct EstimatorOptions {
  PicardOptions flow{};
  EtaOptions eta{};
  std::int64_t flow_paths = 0;  // 0: same as the estimator's n_paths
  int threads = 0;
  // Independent replicate runs for the difference-quotient oracle. The
  // empirically solved tilted flow feeds a common drift shift into every
  // path, so a per-path standard error misses that noise channel entirely;
  // the spread across independent replicates measures it.
  int fd_replicates = 8;
};

// Two-term derivative estimate: the semigroup difference and the martingale
// correlation. value == term_semigroup + term_martingale by construction; the
// combined standard error comes from per-path samples of the summed
// integrand, since the two terms are correlated under common random numbers.
struct DerivativeEstimate {
  double value = 0.0;
  double std_err = 0.0;
  double term_semigroup = 0.0;
  double term_semigroup_se = 0.0;
  double term_martingale = 0.0;
  double term_martingale_se = 0.0;
  double t = 0.0;
  std::int64_t n_paths = 0;
  std::uint64_t seed = 0;
  std::string config_hash;  // filled by config-driven runs
  std::string f_name;
  PicardDiag flow_diag;
  PicardDiagnostics eta_diag;
  std::int64_t blowups = 0;
  bool growth_warning = false;
};

// Derivative of mu -> E f(X_t) along the mixing toward nu, by the martingale
// weight representation: solve the flow from mu, simulate coupled base/tilted
// ensembles against it, solve the weight equation, then average
//   f(tilted) - f(base)   and   f(base) * M_t.
// Non-convergence of either fixed point propagates as NonConvergenceError.
DerivativeEstimate extrinsic_derivative(const DriftModel& model, const ParticleMeasure& mu,
                                        const ParticleMeasure& nu, const Observable& f, double t,
                                        const TimeGrid& grid, std::int64_t n_paths,
                                        std::uint64_t seed, const EstimatorOptions& opts = {});

// Same pipeline evaluated for several test functions at once; the flow,
// ensembles and weight are shared across observables.
std::vector<DerivativeEstimate> extrinsic_derivative_multi(
    const DriftModel& model, const ParticleMeasure& mu, const ParticleMeasure& nu,
    const std::vector<Observable>& fs, double t, const TimeGrid& grid, std::int64_t n_paths,
    std::uint64_t seed, const EstimatorOptions& opts = {});

struct FdPoint {
  double eps = 0.0;
  double value = 0.0;
  double std_err = 0.0;
};

struct FdResult {
  std::vector<FdPoint> points;  // one per requested eps
  double value = 0.0;           // extrapolated to eps -> 0 from the two smallest eps
  double std_err = 0.0;
  double t = 0.0;
  std::int64_t n_paths = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string f_name;
};

// Independent difference-quotient oracle: for each eps, solves the full
// self-consistent flow at the eps-mixture and forms
//   (P_t f(mix) - P_t f(mu)) / eps
// from path-paired runs (shared uniforms, selector coupling, shared
// increments), then extrapolates the O(eps) bias away with the two smallest
// eps values.
FdResult finite_difference_derivative(const DriftModel& model, const ParticleMeasure& mu,
                                      const ParticleMeasure& nu, const Observable& f, double t,
                                      const std::vector<double>& eps_list, const TimeGrid& grid,
                                      std::int64_t n_paths, std::uint64_t seed,
                                      const EstimatorOptions& opts = {});

std::vector<FdResult> finite_difference_derivative_multi(
    const DriftModel& model, const ParticleMeasure& mu, const ParticleMeasure& nu,
    const std::vector<Observable>& fs, double t, const std::vector<double>& eps_list,
    const TimeGrid& grid, std::int64_t n_paths, std::uint64_t seed,
    const EstimatorOptions& opts = {});

struct GirsanovWeight {
  std::vector<double> r;       // per-path weight R_t, positive
  std::vector<double> log_r;   // per-path log-weight
  std::vector<double> xi_sq;   // per-path integral of |xi_s|^2 ds
  double mean_r = 0.0;
  double mean_r_se = 0.0;
  double ess = 0.0;  // effective sample size
  bool low_ess_warning = false;
};

struct ReweightedMean {
  double value = 0.0;
  double std_err = 0.0;
  GirsanovWeight weight;
};

// Importance-sampling estimate of expectations under the target-flow
// dynamics from paths simulated under the base flow: the drift shift
//   xi_s = F(s, X_s, m_target(s)) - F(s, X_s, m_base(s))
// accumulates the exponential weight log R_t = sum <xi, dW> - 1/2 sum
// |xi|^2 dt, and the reweighted mean of f(X_t) R_t is returned (E R_t = 1).
ReweightedMean girsanov_reweighted_mean(const DriftModel& model, const MeasureFlow& base_flow,
                                        const MeasureFlow& target_flow, const PathEnsemble& paths,
                                        const Observable& f, double t, int threads = 0);

struct DecayPoint {
  double t = 0.0;
  double term_martingale = 0.0;
  double std_err = 0.0;
};

struct DecayProbe {
  std::vector<DecayPoint> points;
  double exponent = 0.0;  // least-squares slope of log|tm| vs log t
  bool all_zero = false;  // every entry statistically zero
  bool pass = false;      // exponent >= 0.5, or all entries vanish
};

// Small-horizon scan of the martingale term magnitude: the term must vanish
// as t -> 0, at least like sqrt(t). Grids are rebuilt per horizon with step
// close to dt_ref.
DecayProbe small_time_decay_probe(const DriftModel& model, const ParticleMeasure& mu,
                                  const ParticleMeasure& nu, const Observable& f,
                                  const std::vector<double>& t_list, double dt_ref,
                                  std::int64_t n_paths, std::uint64_t seed,
                                  const EstimatorOptions& opts = {});

}  // namespace mvsde
