#pragma once

#include "mvsde/mckean.hpp"

namespace mvsde {

// Pathwise martingale weight for the measure derivative of the semigroup.
//
// For the structured drift the weight factorizes through the interaction
// gradient: along a path of the decoupled equation,
//   eta_t = gradF(t, X_t, m_t) (v_t + c_t),
// where m_t is the solved flow's interaction mean, v_t the semigroup
// difference of h-means between the tilted and base ensembles, and c_t the
// correlation vector E[(h(X_t) - m_t) M_t] closing the fixed point through
// the running martingale M_t = sum_{s<t} <eta_s, dW_s>. Both v and c are
// deterministic curves; all the path dependence of eta sits in gradF.
struct EtaProcess {
  TimeGrid grid;
  std::int64_t n_paths = 0;
  int noise_dim = 0;
  int obs_dim = 0;

  std::vector<double> v;     // (n_steps+1) x obs_dim, semigroup difference term
  std::vector<double> corr;  // (n_steps+1) x obs_dim, correlation vector c_t
  std::vector<double> M;     // n_paths x (n_steps+1), running martingale
  // Pathwise weight values, n_paths x (n_steps+1) x noise_dim; populated on
  // request (store_values) since the martingale accumulation recomputes them
  // on the fly.
  std::vector<double> values;

  std::vector<double> eta_sup;  // per grid point, sup over valid paths of |eta|
  std::vector<double> m_mean;   // per grid point, sample mean of M
  std::vector<double> m_se;     // per grid point, standard error of M

  double m_at(std::int64_t p, int j) const {
    return M[std::size_t(p) * (std::size_t(grid.n_steps) + 1) + std::size_t(j)];
  }
  Span v_at(int j) const {
    return Span(v.data() + std::size_t(j) * std::size_t(obs_dim), std::size_t(obs_dim));
  }
  Span corr_at(int j) const {
    return Span(corr.data() + std::size_t(j) * std::size_t(obs_dim), std::size_t(obs_dim));
  }
  Span value_at(std::int64_t p, int j) const {
    return Span(values.data() +
                    (std::size_t(p) * (std::size_t(grid.n_steps) + 1) + std::size_t(j)) *
                        std::size_t(noise_dim),
                std::size_t(noise_dim));
  }

  // Same per-step weight on every path, e.g. for quadrature checks of the
  // stochastic integral. per_step holds (n_steps+1) x noise_dim values.
  static EtaProcess deterministic(const TimeGrid& grid, std::int64_t n_paths,
                                  const std::vector<double>& per_step, int noise_dim);
};

struct PicardDiagnostics {
  std::vector<double> distances;  // sup-norm gaps between successive c iterates
  bool converged = false;
  int iterations = 0;
};

struct EtaOptions {
  int max_iter = 30;
  double tol = 1e-4;  // relative, on the c iterates
  bool store_values = false;
  int threads = 0;
};

// Solves the weight equation by fixed-point iteration on the correlation
// curve c: starting from c = 0, recompute eta along the stored paths,
// re-accumulate M, re-estimate c, until successive c iterates agree. The
// tilted ensemble reuses the base ensemble's Brownian increments and initial
// uniforms (pass nu_paths when already simulated, otherwise it is streamed
// internally with the same seed), so for nu == mu the weight vanishes
// identically rather than statistically.
std::pair<EtaProcess, PicardDiagnostics> solve_eta(const DriftModel& model,
                                                   const MeasureFlow& flow,
                                                   const PathEnsemble& mu_paths,
                                                   const ParticleMeasure& nu,
                                                   const EtaOptions& opts = {},
                                                   const PathEnsemble* nu_paths = nullptr);

// Left-point Ito sums M_t = sum_{j: t_j < t} <eta_j, dW_j> for stored
// pathwise weights; returns the full n_paths x (n_steps+1) matrix.
std::vector<double> martingale_integral(const EtaProcess& eta, const PathEnsemble& paths);

// Reference weight for the mean-field OU model: a * delta * exp((a-1) t).
double eta_ou_closed_form(double a, double delta, double t);

struct EtaResidual {
  std::vector<double> max_z;  // per grid point, worst component z-score
  double overall_max_z = 0.0;
  bool pass(double z_tol = 3.0) const { return overall_max_z <= z_tol; }
};

// Fixed-point residual: re-evaluates the right-hand side of the weight
// equation with fresh Monte-Carlo batches (fresh seed, coupled mu/nu pairs)
// and compares against the converged (v + c) curve in combined-standard-error
// units, at every grid point.
EtaResidual eta_residual_check(const DriftModel& model, const MeasureFlow& flow,
                               const EtaProcess& eta, const ParticleMeasure& mu,
                               const ParticleMeasure& nu, std::int64_t n_paths,
                               std::uint64_t seed, int threads = 0);

}  // namespace mvsde
