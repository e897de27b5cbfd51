#include "mvsde/bismut.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mvsde/parallel.hpp"

namespace mvsde {

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(Span samples) {
  MomentSums acc;
  for (double v : samples) acc.add(v);
  return {acc.mean(), acc.std_error()};
}

// f(X_t) per path for a streamed decoupled run; states are not kept.
std::vector<double> streamed_f_samples(const DriftModel& model, const MeasureFlow& flow,
                                       const InitialLaw& x0, const TimeGrid& grid,
                                       std::int64_t n_paths, std::uint64_t seed,
                                       const Observable& f, int t_index,
                                       std::vector<std::uint8_t>& valid, int threads) {
  const int d = model.dim;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const CounterRng inc(seed, RngStream::increments);
  const CounterRng init(seed, RngStream::init_draws);
  std::vector<double> out(std::size_t(n_paths), 0.0);
  valid.assign(std::size_t(n_paths), 1);
  parallel_chunks(n_paths, threads, [&](int, std::int64_t begin, std::int64_t end) {
    CoeffScratch scr;
    scr.resize(model);
    std::vector<double> x(std::size_t(d), 0.0), z(std::size_t(model.noise_dim)),
        dwb(std::size_t(model.noise_dim));
    for (std::int64_t p = begin; p < end; ++p) {
      const double u = init.uniform(std::uint64_t(p), 0, 0);
      const double s = init.uniform(std::uint64_t(p), 0, 1);
      x0.sample(u, s, x);
      for (int j = 0; j < t_index; ++j) {
        inc.normals(std::uint64_t(p), std::uint32_t(j), z);
        for (int c = 0; c < model.noise_dim; ++c) dwb[std::size_t(c)] = sqdt * z[std::size_t(c)];
        euler_step_with_mean(model, grid.time(j), x, flow.interaction_mean(j), dwb, dt, scr);
        if (!all_finite(x)) {
          valid[std::size_t(p)] = 0;
          break;
        }
      }
      if (valid[std::size_t(p)]) out[std::size_t(p)] = f(x);
    }
  });
  return out;
}

double fit_log_slope(const std::vector<double>& ts, const std::vector<double>& ys) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double x = std::log(ts[i]);
    const double y = std::log(ys[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

std::vector<DerivativeEstimate> extrinsic_derivative_multi(
    const DriftModel& model, const ParticleMeasure& mu, const ParticleMeasure& nu,
    const std::vector<Observable>& fs, double t, const TimeGrid& grid, std::int64_t n_paths,
    std::uint64_t seed, const EstimatorOptions& opts) {
  const int t_idx = grid.index_of(t);
  if (t_idx == 0) throw std::invalid_argument("extrinsic_derivative: t must be positive");

  PicardOptions fopts = opts.flow;
  if (fopts.threads == 0) fopts.threads = opts.threads;
  EtaOptions eopts = opts.eta;
  if (eopts.threads == 0) eopts.threads = opts.threads;
  const std::int64_t flow_paths = opts.flow_paths > 0 ? opts.flow_paths : n_paths;

  auto picard = picard_flow(model, InitialLaw(mu), grid, flow_paths, seed, fopts);
  if (!picard.diag.converged) throw NonConvergenceError("picard_flow", picard.diag.distances);
  const MeasureFlow& flow = picard.flow;

  const SimOptions sim{opts.threads};
  const PathEnsemble mu_ens = simulate_decoupled(model, flow, InitialLaw(mu), grid, n_paths, seed, sim);
  const PathEnsemble nu_ens = simulate_decoupled(model, flow, InitialLaw(nu), grid, n_paths, seed, sim);

  auto [eta, eta_diag] = solve_eta(model, flow, mu_ens, nu, eopts, &nu_ens);
  if (!eta_diag.converged) throw NonConvergenceError("solve_eta", eta_diag.distances);

  std::vector<DerivativeEstimate> out;
  out.reserve(fs.size());
  std::vector<double> s_samples, m_samples, q_samples;
  for (const auto& f : fs) {
    s_samples.clear();
    m_samples.clear();
    q_samples.clear();
    double growth_max = 0.0;
    for (std::int64_t p = 0; p < n_paths; ++p) {
      if (!mu_ens.path_valid[std::size_t(p)] || !nu_ens.path_valid[std::size_t(p)]) continue;
      const Span xm = mu_ens.state(p, t_idx);
      const double fm = f(xm);
      const double fn = f(nu_ens.state(p, t_idx));
      const double sp = fn - fm;
      const double mp = fm * eta.m_at(p, t_idx);
      s_samples.push_back(sp);
      m_samples.push_back(mp);
      q_samples.push_back(sp + mp);
      if ((p & 1023) == 0)
        growth_max = std::max(growth_max, std::fabs(fm) / (1.0 + norm_pow(xm, model.k.k)));
    }
    const auto s_stat = mean_se(s_samples);
    const auto m_stat = mean_se(m_samples);
    const auto q_stat = mean_se(q_samples);

    DerivativeEstimate est;
    est.term_semigroup = s_stat.mean;
    est.term_semigroup_se = s_stat.se;
    est.term_martingale = m_stat.mean;
    est.term_martingale_se = m_stat.se;
    est.value = est.term_semigroup + est.term_martingale;
    est.std_err = q_stat.se;
    est.t = t;
    est.n_paths = n_paths;
    est.seed = seed;
    est.f_name = f.name;
    est.flow_diag = picard.diag;
    est.eta_diag = eta_diag;
    est.blowups = mu_ens.n_invalid + nu_ens.n_invalid;
    est.growth_warning = growth_max > 1e3;
    if (est.growth_warning)
      std::fprintf(stderr, "mvsde: observable '%s' exceeds the growth envelope on samples\n",
                   f.name.c_str());
    out.push_back(std::move(est));
  }
  return out;
}

DerivativeEstimate extrinsic_derivative(const DriftModel& model, const ParticleMeasure& mu,
                                        const ParticleMeasure& nu, const Observable& f, double t,
                                        const TimeGrid& grid, std::int64_t n_paths,
                                        std::uint64_t seed, const EstimatorOptions& opts) {
  return extrinsic_derivative_multi(model, mu, nu, {f}, t, grid, n_paths, seed, opts).front();
}

std::vector<FdResult> finite_difference_derivative_multi(
    const DriftModel& model, const ParticleMeasure& mu, const ParticleMeasure& nu,
    const std::vector<Observable>& fs, double t, const std::vector<double>& eps_list,
    const TimeGrid& grid, std::int64_t n_paths, std::uint64_t seed,
    const EstimatorOptions& opts) {
  if (eps_list.empty()) throw std::invalid_argument("finite_difference_derivative: empty eps list");
  for (double e : eps_list)
    if (!(e > 0.0 && e < 1.0))
      throw std::invalid_argument("finite_difference_derivative: eps must lie in (0,1)");
  const int t_idx = grid.index_of(t);

  PicardOptions fopts = opts.flow;
  if (fopts.threads == 0) fopts.threads = opts.threads;
  fopts.validate_model = opts.flow.validate_model;
  const std::int64_t flow_paths = opts.flow_paths > 0 ? opts.flow_paths : n_paths;

  auto base = picard_flow(model, InitialLaw(mu), grid, flow_paths, seed, fopts);
  if (!base.diag.converged) throw NonConvergenceError("picard_flow", base.diag.distances);
  // The structural-bound warning, if any, was already issued once.
  fopts.validate_model = false;
  // Pin every tilted flow solve to the base solve's iteration depth: the
  // fixed-point residuals then cancel between the runs, instead of entering
  // the quotient as an O(residual / eps) error.
  fopts.force_iterations = base.diag.iterations;

  std::vector<std::uint8_t> base_valid;
  std::vector<std::vector<double>> f_base(fs.size());
  for (std::size_t fi = 0; fi < fs.size(); ++fi)
    f_base[fi] = streamed_f_samples(model, base.flow, InitialLaw(mu), grid, n_paths, seed,
                                    fs[fi], t_idx, base_valid, opts.threads);

  // Quotient samples per (f, eps), kept path-indexed so extrapolation can
  // pair runs across eps values; validity masks may differ per run.
  std::vector<double> eps_sorted(eps_list);
  std::sort(eps_sorted.begin(), eps_sorted.end());
  std::vector<std::vector<std::vector<double>>> quotients(
      fs.size(), std::vector<std::vector<double>>(eps_list.size()));
  std::vector<std::vector<std::uint8_t>> eps_valid(eps_list.size());
  std::vector<std::vector<FdPoint>> points(fs.size(),
                                           std::vector<FdPoint>(eps_list.size()));

  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    const double eps = eps_list[ei];
    const InitialLaw pi = InitialLaw::mixture(mu, nu, eps);
    auto tilted = picard_flow(model, pi, grid, flow_paths, seed, fopts);
    if (!tilted.diag.converged) throw NonConvergenceError("picard_flow", tilted.diag.distances);
    std::vector<std::uint8_t> pi_valid;
    for (std::size_t fi = 0; fi < fs.size(); ++fi) {
      const auto f_pi = streamed_f_samples(model, tilted.flow, pi, grid, n_paths, seed, fs[fi],
                                           t_idx, pi_valid, opts.threads);
      auto& q = quotients[fi][ei];
      q.assign(std::size_t(n_paths), 0.0);
      std::vector<double> live;
      live.reserve(std::size_t(n_paths));
      for (std::int64_t p = 0; p < n_paths; ++p) {
        if (!base_valid[std::size_t(p)] || !pi_valid[std::size_t(p)]) continue;
        q[std::size_t(p)] = (f_pi[std::size_t(p)] - f_base[fi][std::size_t(p)]) / eps;
        live.push_back(q[std::size_t(p)]);
      }
      const auto stat = mean_se(live);
      points[fi][ei] = {eps, stat.mean, stat.se};
    }
    eps_valid[ei] = std::move(pi_valid);
  }

  // Richardson extrapolation: the quotient bias is O(eps), so combine the two
  // smallest eps values path by path.
  std::vector<FdResult> out(fs.size());
  for (std::size_t fi = 0; fi < fs.size(); ++fi) {
    FdResult& r = out[fi];
    r.points = points[fi];
    r.t = t;
    r.n_paths = n_paths;
    r.seed = seed;
    r.f_name = fs[fi].name;
    if (eps_list.size() == 1) {
      r.value = points[fi][0].value;
      r.std_err = points[fi][0].std_err;
      continue;
    }
    const double e1 = eps_sorted[0], e2 = eps_sorted[1];
    const std::size_t i1 =
        std::size_t(std::find(eps_list.begin(), eps_list.end(), e1) - eps_list.begin());
    const std::size_t i2 =
        std::size_t(std::find(eps_list.begin(), eps_list.end(), e2) - eps_list.begin());
    std::vector<double> extrap;
    extrap.reserve(std::size_t(n_paths));
    for (std::int64_t p = 0; p < n_paths; ++p) {
      if (!base_valid[std::size_t(p)] || !eps_valid[i1][std::size_t(p)] ||
          !eps_valid[i2][std::size_t(p)])
        continue;
      extrap.push_back((e2 * quotients[fi][i1][std::size_t(p)] -
                        e1 * quotients[fi][i2][std::size_t(p)]) /
                       (e2 - e1));
    }
    const auto stat = mean_se(extrap);
    r.value = stat.mean;
    r.std_err = stat.se;
  }
  return out;
}

FdResult finite_difference_derivative(const DriftModel& model, const ParticleMeasure& mu,
                                      const ParticleMeasure& nu, const Observable& f, double t,
                                      const std::vector<double>& eps_list, const TimeGrid& grid,
                                      std::int64_t n_paths, std::uint64_t seed,
                                      const EstimatorOptions& opts) {
  return finite_difference_derivative_multi(model, mu, nu, {f}, t, eps_list, grid, n_paths, seed,
                                            opts)
      .front();
}

ReweightedMean girsanov_reweighted_mean(const DriftModel& model, const MeasureFlow& base_flow,
                                        const MeasureFlow& target_flow, const PathEnsemble& paths,
                                        const Observable& f, double t, int threads) {
  if (!(base_flow.grid == paths.grid) || !(target_flow.grid == paths.grid))
    throw std::invalid_argument("girsanov_reweighted_mean: grid mismatch");
  if (base_flow.obs_dim != model.obs_dim || target_flow.obs_dim != model.obs_dim)
    throw std::invalid_argument("girsanov_reweighted_mean: observable dimension mismatch");
  const int t_idx = paths.grid.index_of(t);
  const int nd = model.noise_dim;
  const double dt = paths.grid.dt();

  ReweightedMean out;
  GirsanovWeight& w = out.weight;
  w.r.assign(std::size_t(paths.n_paths), std::numeric_limits<double>::quiet_NaN());
  w.log_r.assign(std::size_t(paths.n_paths), std::numeric_limits<double>::quiet_NaN());
  w.xi_sq.assign(std::size_t(paths.n_paths), std::numeric_limits<double>::quiet_NaN());

  parallel_chunks(paths.n_paths, threads, [&](int, std::int64_t begin, std::int64_t end) {
    CoeffScratch scr;
    scr.resize(model);
    std::vector<double> xi(std::size_t(nd), 0.0), fb(std::size_t(nd), 0.0), dwb(std::size_t(nd), 0.0);
    for (std::int64_t p = begin; p < end; ++p) {
      if (!paths.path_valid[std::size_t(p)]) continue;
      double logr = 0.0, xisq = 0.0;
      for (int j = 0; j < t_idx; ++j) {
        const Span x = paths.state(p, j);
        const double tj = paths.grid.time(j);
        model.F(tj, x, target_flow.interaction_mean(j), xi);
        model.F(tj, x, base_flow.interaction_mean(j), fb);
        for (int c = 0; c < nd; ++c) xi[std::size_t(c)] -= fb[std::size_t(c)];
        paths.dw(p, j, dwb);
        const double x2 = dot(xi, xi);
        logr += dot(xi, dwb) - 0.5 * x2 * dt;
        xisq += x2 * dt;
      }
      w.log_r[std::size_t(p)] = logr;
      w.r[std::size_t(p)] = std::exp(logr);
      w.xi_sq[std::size_t(p)] = xisq;
    }
  });

  MomentSums aval, ar;
  double rsum = 0.0, rsumsq = 0.0;
  for (std::int64_t p = 0; p < paths.n_paths; ++p) {
    if (!paths.path_valid[std::size_t(p)]) continue;
    const double r = w.r[std::size_t(p)];
    aval.add(f(paths.state(p, t_idx)) * r);
    ar.add(r);
    rsum += r;
    rsumsq += r * r;
  }
  out.value = aval.mean();
  out.std_err = aval.std_error();
  w.mean_r = ar.mean();
  w.mean_r_se = ar.std_error();
  w.ess = rsumsq > 0.0 ? rsum * rsum / rsumsq : 0.0;
  w.low_ess_warning = w.ess < 0.1 * double(paths.n_valid());
  if (w.low_ess_warning)
    std::fprintf(stderr, "mvsde: effective sample size %.0f below 10%% of %lld paths\n", w.ess,
                 (long long)paths.n_valid());
  return out;
}

DecayProbe small_time_decay_probe(const DriftModel& model, const ParticleMeasure& mu,
                                  const ParticleMeasure& nu, const Observable& f,
                                  const std::vector<double>& t_list, double dt_ref,
                                  std::int64_t n_paths, std::uint64_t seed,
                                  const EstimatorOptions& opts) {
  if (t_list.empty()) throw std::invalid_argument("small_time_decay_probe: empty t list");
  DecayProbe probe;
  std::vector<double> fit_t, fit_y;
  bool any_significant = false;
  for (double t : t_list) {
    TimeGrid g{t, std::max(4, int(std::lround(t / dt_ref)))};
    const auto est = extrinsic_derivative(model, mu, nu, f, t, g, n_paths, seed, opts);
    probe.points.push_back({t, est.term_martingale, est.term_martingale_se});
    if (std::fabs(est.term_martingale) > 3.0 * est.term_martingale_se) {
      any_significant = true;
      fit_t.push_back(t);
      fit_y.push_back(std::fabs(est.term_martingale));
    }
  }
  if (!any_significant) {
    probe.all_zero = true;
    probe.pass = true;  // the entries vanish outright
    return probe;
  }
  if (fit_t.size() >= 2) {
    probe.exponent = fit_log_slope(fit_t, fit_y);
    probe.pass = probe.exponent >= 0.5;
  }
  return probe;
}

}  // namespace mvsde
