#pragma once

#include <functional>
#include <string>

#include "mvsde/measure.hpp"

namespace mvsde {

using VecFn = std::function<void(double, Span, MutSpan)>;          // (t, x) -> vector
using MatFn = std::function<void(double, Span, MutSpan)>;          // (t, x) -> row-major matrix
using InteractFn = std::function<void(double, Span, Span, MutSpan)>;  // (t, x, m) -> vector/matrix

// Coefficient bundle for the structured drift
//   b(t, x, mu) = b0(t, x) + sigma(t, x) * F(t, x, mu(h)),
// the interaction entering only through the observable mean mu(h). That
// restriction keeps the measure derivative of the drift an explicit kernel,
//   gradF(t, x, mu(h)) * (h(y) - mu(h)),
// which is what the weight solver downstream depends on.
//
// All callbacks must be pure and reentrant; models are immutable after
// construction and safe to share across threads.
struct DriftModel {
  std::string name;
  int dim = 0;        // state dimension d
  int noise_dim = 0;  // Brownian dimension m = columns of sigma = output of F
  int obs_dim = 0;    // output dimension n of h

  VecFn b0;          // out: dim
  MatFn sigma;       // out: dim x noise_dim
  InteractFn F;      // out: noise_dim
  InteractFn gradF;  // out: noise_dim x obs_dim
  ObsFn h;           // out: obs_dim

  MomentOrder k;
  std::function<double(double)> K;      // bound process K_t > 0
  std::function<double(double)> alpha;  // modulus, increasing, alpha(0+) = 0
};

struct GradCheckOptions {
  int n_probes = 32;
  double step = 1e-6;
  double rel_tol = 1e-5;  // per entry, with unit floor for near-zero entries
  double x_radius = 2.0;
  double m_radius = 2.0;
  std::uint64_t seed = 0x5eedf00dULL;
};

// Validates dimensions and cross-checks gradF against central differences of
// F on random probes. Silent gradient bugs would corrupt the martingale
// weight invisibly, so every construction path goes through here.
DriftModel checked(DriftModel model, const GradCheckOptions& opts = {});

// Per-thread scratch for coefficient evaluation in hot loops.
struct CoeffScratch {
  std::vector<double> b, sig, f, tmp, obs, grad;
  void resize(const DriftModel& m) {
    b.resize(std::size_t(m.dim));
    sig.resize(std::size_t(m.dim) * std::size_t(m.noise_dim));
    f.resize(std::size_t(m.noise_dim));
    tmp.resize(std::size_t(m.noise_dim));
    obs.resize(std::size_t(m.obs_dim));
    grad.resize(std::size_t(m.noise_dim) * std::size_t(m.obs_dim));
  }
};

// out = b0(t,x) + sigma(t,x) F(t, x, m_mean), with m_mean = mu(h) supplied.
void eval_drift(const DriftModel& model, double t, Span x, Span m_mean, MutSpan out,
                CoeffScratch& scr);

// Full drift against a finitely supported measure.
std::vector<double> drift(const DriftModel& model, double t, Span x, const ParticleMeasure& mu);

// Extrinsic derivative of the interaction part of the drift at y:
//   gradF(t, x, mu(h)) * (h(y) - mu(h)).
// This is the centered linear-functional-derivative version: integrating it
// against mu gives exactly zero.
std::vector<double> extrinsic_drift_derivative(const DriftModel& model, double t, Span x,
                                               const ParticleMeasure& mu, Span y);

// Sampling ranges for the structural-bound spot check.
struct H2ProbeSpec {
  int n_probes = 200;
  std::uint64_t seed = 20240701ULL;
  double t_max = 1.0;
  double x_radius = 3.0;
  double y_radius = 3.0;
  double measure_radius = 1.0;  // atom box half-width
  double measure_center = 0.0;  // atom box center (per coordinate)
  int max_atoms = 4;
};

struct H2Report {
  double dc2_max_ratio = 0.0;  // growth bound: |D - c| / (K_t (1 + |y|^k))
  double dc3_max_ratio = 0.0;  // measure continuity bound ratio
  double dc2_worst_t = 0.0, dc3_worst_t = 0.0;
  int n_probes = 0;
  bool pass_dc2 = false;
  bool pass_dc3 = false;
  bool pass() const { return pass_dc2 && pass_dc3; }
};

// Numerical spot check of the two structural bounds on the drift's measure
// derivative: a growth bound after optimal centering (the mu-average of the
// derivative is used as the centering candidate, an upper bound for the true
// infimum) and a modulus-of-continuity bound between measures. Violations are
// reported, never thrown.
H2Report validate_h2(const DriftModel& model, const H2ProbeSpec& probe = {});

// Degenerate model: noiseless position block driven by Z1, momentum block
// driven by Z2 with invertible diffusion sigma_tilde.
struct HamiltonianModel {
  std::string name;
  int dim1 = 0;  // position block
  int dim2 = 0;  // momentum block
  int obs_dim = 0;

  VecFn Z1;             // (t, x) -> dim1
  InteractFn Z2;        // (t, x, m) -> dim2
  InteractFn gradZ2;    // (t, x, m) -> dim2 x obs_dim
  MatFn sigma_tilde;    // (t, x) -> dim2 x dim2, invertible
  ObsFn h;
  MomentOrder k;
  std::function<double(double)> K;
  std::function<double(double)> alpha;
};

// Embeds the system into the structured drift form:
//   b0 = (Z1, 0),  sigma = diag(0, sigma_tilde),  F = (0, sigma_tilde^{-1} Z2),
// driven by a (dim1+dim2)-dimensional Brownian motion whose first block is
// multiplied by the zero diffusion rows.
DriftModel embed(const HamiltonianModel& hm, const GradCheckOptions& opts = {});

struct SigmaTildeReport {
  double min_cond = 0.0;
  double max_cond = 0.0;
  bool all_invertible = false;
  int n_probes = 0;
};

// Condition-number survey of sigma_tilde over random (t, x) probes.
SigmaTildeReport probe_sigma_tilde(const HamiltonianModel& hm, int n_probes = 64,
                                   std::uint64_t seed = 99, double t_max = 1.0,
                                   double x_radius = 3.0);

}  // namespace mvsde
