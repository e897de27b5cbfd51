#pragma once

#include <cstdint>

#include "mvsde/flow.hpp"
#include "mvsde/model.hpp"
#include "mvsde/observables.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

// Initial-state sampler. Plain mode draws by inverse CDF from one measure;
// mixture mode draws from (1-eps) base + eps tilt using a separate selector
// uniform, so runs at different eps (and the base run itself) stay coupled
// path-by-path under a shared seed.
class InitialLaw {
 public:
  explicit InitialLaw(ParticleMeasure measure);
  static InitialLaw mixture(ParticleMeasure base, ParticleMeasure tilt, double eps);

  // u: atom-selection uniform, s: branch-selection uniform; both in [0,1).
  void sample(double u, double s, MutSpan out) const;
  const ParticleMeasure& law() const { return merged_; }
  int dim() const { return base_.dim(); }

 private:
  InitialLaw() = default;
  static void draw(const ParticleMeasure& m, const std::vector<double>& cum, double u, MutSpan out);

  ParticleMeasure base_, tilt_, merged_;
  std::vector<double> cum_base_, cum_tilt_;
  double eps_ = 0.0;
  bool mixture_ = false;
};

// Simulated path bundle. States are stored per (path, step); the Brownian
// increments are addressed draws of the counter generator keyed by the seed,
// so dw(p, j) regenerates the exact increments used by the integrator
// (bitwise) instead of holding a second array of the same size.
struct PathEnsemble {
  TimeGrid grid;
  int dim = 0;
  int noise_dim = 0;
  std::int64_t n_paths = 0;
  std::uint64_t seed = 0;

  std::vector<double> states;            // n_paths x (n_steps+1) x dim
  std::vector<std::uint8_t> path_valid;  // 0 after a blow-up
  std::vector<std::int32_t> blowup_step; // -1 when none
  std::int64_t n_invalid = 0;

  Span state(std::int64_t p, int j) const {
    return Span(states.data() +
                    (std::size_t(p) * (std::size_t(grid.n_steps) + 1) + std::size_t(j)) *
                        std::size_t(dim),
                std::size_t(dim));
  }
  void dw(std::int64_t p, int j, MutSpan out) const {
    const CounterRng rng(seed, RngStream::increments);
    rng.normals(std::uint64_t(p), std::uint32_t(j), out);
    const double sq = std::sqrt(grid.dt());
    for (double& v : out) v *= sq;
  }
  std::vector<double> materialize_dw() const;
  std::int64_t n_valid() const { return n_paths - n_invalid; }
};

struct SimOptions {
  int threads = 0;  // 0 = hardware concurrency; never affects results
};

// One explicit Euler step against a frozen interaction mean:
//   x <- x + dt * b0 + sigma (dt * F + dw).
// This is the exact arithmetic of the integrator; replay with the same
// inputs is bitwise.
inline void euler_step_with_mean(const DriftModel& model, double t, MutSpan x, Span m_mean,
                                 Span dw, double dt, CoeffScratch& scr) {
  model.b0(t, x, scr.b);
  model.F(t, x, m_mean, scr.f);
  model.sigma(t, x, scr.sig);
  for (int i = 0; i < model.noise_dim; ++i)
    scr.tmp[std::size_t(i)] = dt * scr.f[std::size_t(i)] + dw[std::size_t(i)];
  for (int i = 0; i < model.dim; ++i) x[std::size_t(i)] += dt * scr.b[std::size_t(i)];
  matvec_acc(scr.sig, model.dim, model.noise_dim, scr.tmp, x);
}

// Measure-argument form of the step.
std::vector<double> euler_step(const DriftModel& model, double t, Span x,
                               const ParticleMeasure& mu_t, Span dw, double dt);

// Euler-Maruyama paths of the decoupled equation driven by the frozen flow.
// Initial states are i.i.d. draws from x0; a path whose state leaves the
// finite range is frozen at its last finite value, marked invalid and
// excluded from every ensemble average, with the first bad step recorded.
PathEnsemble simulate_decoupled(const DriftModel& model, const MeasureFlow& flow,
                                const InitialLaw& x0, const TimeGrid& grid, std::int64_t n_paths,
                                std::uint64_t seed, const SimOptions& opts = {});

struct FunctionalMean {
  double value = 0.0;
  double std_err = 0.0;
  bool growth_warning = false;
};

// Monte-Carlo mean of f over valid paths at a grid time. The growth of f is
// spot-checked on sampled states against c (1 + |x|^k); a violation only
// warns since sampled states cannot certify the bound.
FunctionalMean functional_mean(const PathEnsemble& ensemble, const Observable& f, int t_index,
                               MomentOrder k, double growth_threshold = 1e3);

}  // namespace mvsde
