#include "mvsde/sde.hpp"

#include <algorithm>
#include <cstdio>

#include "mvsde/parallel.hpp"

namespace mvsde {

namespace {

std::vector<double> cumulative_weights(const ParticleMeasure& m) {
  std::vector<double> cum(m.size());
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    s += m.weight(i);
    cum[i] = s;
  }
  cum.back() = 1.0;
  return cum;
}

}  // namespace

InitialLaw::InitialLaw(ParticleMeasure measure) {
  base_ = std::move(measure);
  merged_ = base_;
  cum_base_ = cumulative_weights(base_);
}

InitialLaw InitialLaw::mixture(ParticleMeasure base, ParticleMeasure tilt, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("InitialLaw: eps outside [0,1]");
  InitialLaw law;
  law.merged_ = mix(base, tilt, eps);
  law.base_ = std::move(base);
  law.tilt_ = std::move(tilt);
  law.cum_base_ = cumulative_weights(law.base_);
  law.cum_tilt_ = cumulative_weights(law.tilt_);
  law.eps_ = eps;
  law.mixture_ = true;
  return law;
}

void InitialLaw::draw(const ParticleMeasure& m, const std::vector<double>& cum, double u,
                      MutSpan out) {
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  const std::size_t i = std::min(std::size_t(it - cum.begin()), m.size() - 1);
  const Span a = m.atom(i);
  std::copy(a.begin(), a.end(), out.begin());
}

void InitialLaw::sample(double u, double s, MutSpan out) const {
  if (mixture_ && s >= 1.0 - eps_)
    draw(tilt_, cum_tilt_, u, out);
  else
    draw(base_, cum_base_, u, out);
}

std::vector<double> PathEnsemble::materialize_dw() const {
  std::vector<double> out(std::size_t(n_paths) * std::size_t(grid.n_steps) *
                          std::size_t(noise_dim));
  for (std::int64_t p = 0; p < n_paths; ++p)
    for (int j = 0; j < grid.n_steps; ++j)
      dw(p, j,
         MutSpan(out.data() + (std::size_t(p) * std::size_t(grid.n_steps) + std::size_t(j)) *
                                  std::size_t(noise_dim),
                 std::size_t(noise_dim)));
  return out;
}

std::vector<double> euler_step(const DriftModel& model, double t, Span x,
                               const ParticleMeasure& mu_t, Span dw, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("euler_step: dt must be positive");
  if (int(dw.size()) != model.noise_dim)
    throw std::invalid_argument("euler_step: noise dimension mismatch");
  const auto m = observable_mean(mu_t, model.h, model.obs_dim);
  CoeffScratch scr;
  scr.resize(model);
  std::vector<double> out(x.begin(), x.end());
  euler_step_with_mean(model, t, out, m, dw, dt, scr);
  return out;
}

PathEnsemble simulate_decoupled(const DriftModel& model, const MeasureFlow& flow,
                                const InitialLaw& x0, const TimeGrid& grid, std::int64_t n_paths,
                                std::uint64_t seed, const SimOptions& opts) {
  grid.validate();
  if (!(flow.grid == grid)) throw std::invalid_argument("simulate_decoupled: grid mismatch");
  if (flow.obs_dim != model.obs_dim)
    throw std::invalid_argument("simulate_decoupled: flow/model observable dimension mismatch");
  if (x0.dim() != model.dim)
    throw std::invalid_argument("simulate_decoupled: initial law dimension mismatch");
  if (n_paths < 1 || n_paths > std::int64_t(1) << 32)
    throw std::invalid_argument("simulate_decoupled: n_paths out of range");

  const int n = grid.n_steps;
  const int d = model.dim;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);

  PathEnsemble ens;
  ens.grid = grid;
  ens.dim = d;
  ens.noise_dim = model.noise_dim;
  ens.n_paths = n_paths;
  ens.seed = seed;
  ens.states.resize(std::size_t(n_paths) * (std::size_t(n) + 1) * std::size_t(d));
  ens.path_valid.assign(std::size_t(n_paths), 1);
  ens.blowup_step.assign(std::size_t(n_paths), -1);

  const CounterRng inc(seed, RngStream::increments);
  const CounterRng init(seed, RngStream::init_draws);

  parallel_chunks(n_paths, opts.threads, [&](int, std::int64_t begin, std::int64_t end) {
    CoeffScratch scr;
    scr.resize(model);
    std::vector<double> z(std::size_t(model.noise_dim));
    std::vector<double> dwbuf(std::size_t(model.noise_dim));
    for (std::int64_t p = begin; p < end; ++p) {
      double* path = ens.states.data() + std::size_t(p) * (std::size_t(n) + 1) * std::size_t(d);
      const double u = init.uniform(std::uint64_t(p), 0, 0);
      const double s = init.uniform(std::uint64_t(p), 0, 1);
      x0.sample(u, s, MutSpan(path, std::size_t(d)));
      MutSpan x(path, std::size_t(d));
      for (int j = 0; j < n; ++j) {
        double* next = path + (std::size_t(j) + 1) * std::size_t(d);
        std::copy(x.begin(), x.end(), next);
        MutSpan xn(next, std::size_t(d));
        inc.normals(std::uint64_t(p), std::uint32_t(j), z);
        for (int c = 0; c < model.noise_dim; ++c) dwbuf[std::size_t(c)] = sqdt * z[std::size_t(c)];
        euler_step_with_mean(model, grid.time(j), xn, flow.interaction_mean(j), dwbuf, dt, scr);
        if (!all_finite(xn)) {
          // Freeze at the last finite state and abandon the path.
          ens.path_valid[std::size_t(p)] = 0;
          ens.blowup_step[std::size_t(p)] = j + 1;
          std::copy(x.begin(), x.end(), next);
          for (int r = j + 1; r < n; ++r)
            std::copy(x.begin(), x.end(), path + (std::size_t(r) + 1) * std::size_t(d));
          break;
        }
        x = xn;
      }
    }
  });

  for (std::int64_t p = 0; p < n_paths; ++p)
    if (!ens.path_valid[std::size_t(p)]) ++ens.n_invalid;
  if (ens.n_invalid > 0)
    std::fprintf(stderr, "mvsde: %lld of %lld paths blew up and were excluded\n",
                 (long long)ens.n_invalid, (long long)n_paths);
  return ens;
}

FunctionalMean functional_mean(const PathEnsemble& ensemble, const Observable& f, int t_index,
                               MomentOrder k, double growth_threshold) {
  if (t_index < 0 || t_index > ensemble.grid.n_steps)
    throw std::invalid_argument("functional_mean: t_index out of range");
  MomentSums acc;
  double max_ratio = 0.0;
  const std::int64_t stride = std::max<std::int64_t>(1, ensemble.n_paths / 512);
  for (std::int64_t p = 0; p < ensemble.n_paths; ++p) {
    if (!ensemble.path_valid[std::size_t(p)]) continue;
    const Span x = ensemble.state(p, t_index);
    const double v = f(x);
    acc.add(v);
    if (p % stride == 0)
      max_ratio = std::max(max_ratio, std::fabs(v) / (1.0 + norm_pow(x, k.k)));
  }
  FunctionalMean out;
  out.value = acc.mean();
  out.std_err = acc.std_error();
  out.growth_warning = max_ratio > growth_threshold;
  if (out.growth_warning)
    std::fprintf(stderr, "mvsde: observable '%s' exceeds the (1+|x|^k) growth envelope on samples\n",
                 f.name.c_str());
  return out;
}

}  // namespace mvsde
