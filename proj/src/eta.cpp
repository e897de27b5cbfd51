#include "mvsde/eta.hpp"

#include <algorithm>
#include <cmath>

#include "mvsde/parallel.hpp"

namespace mvsde {

namespace {

// Per-step h-means of an ensemble over its valid paths.
std::vector<double> ensemble_h_means(const DriftModel& model, const PathEnsemble& paths,
                                     int threads) {
  const int n = paths.grid.n_steps;
  const int nh = model.obs_dim;
  const int nchunks = chunk_count(paths.n_paths);
  std::vector<std::vector<double>> parts(static_cast<std::size_t>(nchunks));
  std::vector<std::int64_t> counts(std::size_t(nchunks), 0);
  parallel_chunks(paths.n_paths, threads, [&](int ci, std::int64_t begin, std::int64_t end) {
    auto& acc = parts[std::size_t(ci)];
    acc.assign((std::size_t(n) + 1) * std::size_t(nh), 0.0);
    std::vector<double> hbuf(std::size_t(nh), 0.0);
    for (std::int64_t p = begin; p < end; ++p) {
      if (!paths.path_valid[std::size_t(p)]) continue;
      ++counts[std::size_t(ci)];
      for (int j = 0; j <= n; ++j) {
        model.h(paths.state(p, j), hbuf);
        double* a = acc.data() + std::size_t(j) * std::size_t(nh);
        for (int c = 0; c < nh; ++c) a[c] += hbuf[std::size_t(c)];
      }
    }
  });
  std::vector<double> out((std::size_t(n) + 1) * std::size_t(nh), 0.0);
  std::int64_t n_valid = 0;
  for (int ci = 0; ci < nchunks; ++ci) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += parts[std::size_t(ci)][i];
    n_valid += counts[std::size_t(ci)];
  }
  if (n_valid == 0) throw std::runtime_error("ensemble_h_means: no valid paths");
  for (double& v : out) v /= double(n_valid);
  return out;
}

// Streaming tilted-ensemble h-means under the base ensemble's seed (shared
// initial uniforms and increments), when the caller has not materialized it.
std::vector<double> streamed_h_means(const DriftModel& model, const MeasureFlow& flow,
                                     const InitialLaw& x0, const TimeGrid& grid,
                                     std::int64_t n_paths, std::uint64_t seed, int threads) {
  const int n = grid.n_steps;
  const int d = model.dim;
  const int nh = model.obs_dim;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const CounterRng inc(seed, RngStream::increments);
  const CounterRng init(seed, RngStream::init_draws);
  const int nchunks = chunk_count(n_paths);
  std::vector<std::vector<double>> parts(static_cast<std::size_t>(nchunks));
  std::vector<std::int64_t> counts(std::size_t(nchunks), 0);
  parallel_chunks(n_paths, threads, [&](int ci, std::int64_t begin, std::int64_t end) {
    auto& acc = parts[std::size_t(ci)];
    acc.assign((std::size_t(n) + 1) * std::size_t(nh), 0.0);
    std::vector<double> local((std::size_t(n) + 1) * std::size_t(nh));
    CoeffScratch scr;
    scr.resize(model);
    std::vector<double> x(std::size_t(d), 0.0), z(std::size_t(model.noise_dim)),
        dwb(std::size_t(model.noise_dim)), hbuf(std::size_t(nh), 0.0);
    for (std::int64_t p = begin; p < end; ++p) {
      const double u = init.uniform(std::uint64_t(p), 0, 0);
      const double s = init.uniform(std::uint64_t(p), 0, 1);
      x0.sample(u, s, x);
      bool ok = true;
      for (int j = 0; j <= n; ++j) {
        model.h(x, hbuf);
        std::copy(hbuf.begin(), hbuf.end(), local.begin() + std::size_t(j) * std::size_t(nh));
        if (j == n) break;
        inc.normals(std::uint64_t(p), std::uint32_t(j), z);
        for (int c = 0; c < model.noise_dim; ++c) dwb[std::size_t(c)] = sqdt * z[std::size_t(c)];
        euler_step_with_mean(model, grid.time(j), x, flow.interaction_mean(j), dwb, dt, scr);
        if (!all_finite(x)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      ++counts[std::size_t(ci)];
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += local[i];
    }
  });
  std::vector<double> out((std::size_t(n) + 1) * std::size_t(nh), 0.0);
  std::int64_t n_valid = 0;
  for (int ci = 0; ci < nchunks; ++ci) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += parts[std::size_t(ci)][i];
    n_valid += counts[std::size_t(ci)];
  }
  if (n_valid == 0) throw std::runtime_error("solve_eta: tilted ensemble lost every path");
  for (double& v : out) v /= double(n_valid);
  return out;
}

}  // namespace

EtaProcess EtaProcess::deterministic(const TimeGrid& grid, std::int64_t n_paths,
                                     const std::vector<double>& per_step, int noise_dim) {
  if (per_step.size() != (std::size_t(grid.n_steps) + 1) * std::size_t(noise_dim))
    throw std::invalid_argument("EtaProcess::deterministic: per_step size mismatch");
  EtaProcess eta;
  eta.grid = grid;
  eta.n_paths = n_paths;
  eta.noise_dim = noise_dim;
  eta.obs_dim = 0;
  eta.values.resize(std::size_t(n_paths) * per_step.size());
  for (std::int64_t p = 0; p < n_paths; ++p)
    std::copy(per_step.begin(), per_step.end(),
              eta.values.begin() + std::size_t(p) * per_step.size());
  return eta;
}

std::pair<EtaProcess, PicardDiagnostics> solve_eta(const DriftModel& model,
                                                   const MeasureFlow& flow,
                                                   const PathEnsemble& mu_paths,
                                                   const ParticleMeasure& nu,
                                                   const EtaOptions& opts,
                                                   const PathEnsemble* nu_paths) {
  if (!(flow.grid == mu_paths.grid)) throw std::invalid_argument("solve_eta: grid mismatch");
  if (flow.obs_dim != model.obs_dim || mu_paths.dim != model.dim)
    throw std::invalid_argument("solve_eta: dimension mismatch");
  if (nu_paths) {
    if (nu_paths->seed != mu_paths.seed || !(nu_paths->grid == mu_paths.grid) ||
        nu_paths->n_paths != mu_paths.n_paths)
      throw std::invalid_argument("solve_eta: tilted ensemble not coupled to the base ensemble");
  }

  const TimeGrid grid = mu_paths.grid;
  const int n = grid.n_steps;
  const int nh = model.obs_dim;
  const int nd = model.noise_dim;
  const std::int64_t N = mu_paths.n_paths;
  const std::int64_t n_valid = mu_paths.n_valid();
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const std::size_t row = std::size_t(n) + 1;

  const auto hbar_mu = ensemble_h_means(model, mu_paths, opts.threads);
  const auto hbar_nu =
      nu_paths ? ensemble_h_means(model, *nu_paths, opts.threads)
               : streamed_h_means(model, flow, InitialLaw(nu), grid, N, mu_paths.seed,
                                  opts.threads);

  EtaProcess eta;
  eta.grid = grid;
  eta.n_paths = N;
  eta.noise_dim = nd;
  eta.obs_dim = nh;
  eta.v.resize(row * std::size_t(nh));
  for (std::size_t i = 0; i < eta.v.size(); ++i) eta.v[i] = hbar_nu[i] - hbar_mu[i];
  eta.corr.assign(row * std::size_t(nh), 0.0);

  const CounterRng inc(mu_paths.seed, RngStream::increments);
  const int nchunks = chunk_count(N);

  // One sweep along the stored paths: accumulates the next correlation curve
  // from the running martingale, and optionally fills the output arrays.
  std::vector<double> vc(row * std::size_t(nh));
  struct FillPartial {
    std::vector<double> msum, msumsq, esup;
  };
  auto sweep = [&](const std::vector<double>& c, std::vector<double>& c_next, bool fill,
                   std::vector<FillPartial>* fparts) {
    for (std::size_t i = 0; i < vc.size(); ++i) vc[i] = eta.v[i] + c[i];
    std::vector<std::vector<double>> parts(static_cast<std::size_t>(nchunks));
    parallel_chunks(N, opts.threads, [&](int ci, std::int64_t begin, std::int64_t end) {
      auto& acc = parts[std::size_t(ci)];
      acc.assign(row * std::size_t(nh), 0.0);
      FillPartial* fp = nullptr;
      if (fill) {
        fp = &(*fparts)[std::size_t(ci)];
        fp->msum.assign(row, 0.0);
        fp->msumsq.assign(row, 0.0);
        fp->esup.assign(row, 0.0);
      }
      CoeffScratch scr;
      scr.resize(model);
      std::vector<double> hbuf(std::size_t(nh), 0.0), ebuf(std::size_t(nd), 0.0),
          z(std::size_t(nd), 0.0), dwb(std::size_t(nd), 0.0);
      for (std::int64_t p = begin; p < end; ++p) {
        const bool ok = mu_paths.path_valid[std::size_t(p)] != 0;
        if (!ok && !fill) continue;
        double m_run = 0.0;
        for (int j = 0; j <= n; ++j) {
          const Span x = mu_paths.state(p, j);
          if (ok) {
            model.h(x, hbuf);
            const double* mf = flow.h_means.data() + std::size_t(j) * std::size_t(nh);
            double* a = acc.data() + std::size_t(j) * std::size_t(nh);
            for (int c2 = 0; c2 < nh; ++c2)
              a[c2] += (hbuf[std::size_t(c2)] - mf[c2]) * m_run;
          }
          if (fill) {
            eta.M[std::size_t(p) * row + std::size_t(j)] = ok ? m_run : 0.0;
            if (ok) {
              fp->msum[std::size_t(j)] += m_run;
              fp->msumsq[std::size_t(j)] += m_run * m_run;
            }
          }
          if (fill || j < n) {
            model.gradF(grid.time(j), x, flow.interaction_mean(j), scr.grad);
            matvec(scr.grad, nd, nh,
                   Span(vc.data() + std::size_t(j) * std::size_t(nh), std::size_t(nh)), ebuf);
            if (fill) {
              if (opts.store_values)
                std::copy(ebuf.begin(), ebuf.end(),
                          eta.values.begin() +
                              (std::size_t(p) * row + std::size_t(j)) * std::size_t(nd));
              if (ok)
                fp->esup[std::size_t(j)] = std::max(fp->esup[std::size_t(j)], norm2(ebuf));
            }
            if (j < n && ok) {
              inc.normals(std::uint64_t(p), std::uint32_t(j), z);
              for (int c2 = 0; c2 < nd; ++c2) dwb[std::size_t(c2)] = sqdt * z[std::size_t(c2)];
              m_run += dot(ebuf, dwb);
            }
          }
        }
      }
    });
    std::fill(c_next.begin(), c_next.end(), 0.0);
    for (const auto& acc : parts)
      for (std::size_t i = 0; i < c_next.size(); ++i) c_next[i] += acc[i];
    for (double& v : c_next) v /= double(n_valid);
  };

  PicardDiagnostics diag;
  std::vector<double> c(row * std::size_t(nh), 0.0), c_next(row * std::size_t(nh));
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    sweep(c, c_next, false, nullptr);
    double dist = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      dist = std::max(dist, std::fabs(c_next[i] - c[i]));
      scale = std::max(scale, std::fabs(c_next[i]));
    }
    diag.distances.push_back(dist);
    diag.iterations = iter;
    c = c_next;
    if (dist <= opts.tol * (1.0 + scale)) {
      diag.converged = true;
      break;
    }
  }
  eta.corr = c;

  // Final pass with the converged curve: martingale matrix and summaries.
  eta.M.resize(std::size_t(N) * row);
  if (opts.store_values) eta.values.resize(std::size_t(N) * row * std::size_t(nd));
  std::vector<FillPartial> fparts(static_cast<std::size_t>(nchunks));
  sweep(c, c_next, true, &fparts);
  eta.eta_sup.assign(row, 0.0);
  eta.m_mean.assign(row, 0.0);
  eta.m_se.assign(row, 0.0);
  for (std::size_t j = 0; j < row; ++j) {
    double sum = 0.0, sumsq = 0.0;
    for (const auto& fp : fparts) {
      sum += fp.msum[j];
      sumsq += fp.msumsq[j];
      eta.eta_sup[j] = std::max(eta.eta_sup[j], fp.esup[j]);
    }
    eta.m_mean[j] = sum / double(n_valid);
    if (n_valid > 1) {
      const double var =
          std::max(0.0, (sumsq - sum * sum / double(n_valid)) / double(n_valid - 1));
      eta.m_se[j] = std::sqrt(var / double(n_valid));
    }
  }
  return {std::move(eta), std::move(diag)};
}

std::vector<double> martingale_integral(const EtaProcess& eta, const PathEnsemble& paths) {
  if (eta.values.empty())
    throw std::invalid_argument("martingale_integral: eta has no stored pathwise values");
  if (eta.n_paths != paths.n_paths || !(eta.grid == paths.grid) ||
      eta.noise_dim != paths.noise_dim)
    throw std::invalid_argument("martingale_integral: shape mismatch");
  const int n = paths.grid.n_steps;
  const std::size_t row = std::size_t(n) + 1;
  std::vector<double> M(std::size_t(paths.n_paths) * row);
  std::vector<double> dwb(std::size_t(paths.noise_dim));
  for (std::int64_t p = 0; p < paths.n_paths; ++p) {
    double m = 0.0;
    M[std::size_t(p) * row] = 0.0;
    for (int j = 0; j < n; ++j) {
      paths.dw(p, j, dwb);
      m += dot(eta.value_at(p, j), dwb);
      M[std::size_t(p) * row + std::size_t(j) + 1] = m;
    }
  }
  return M;
}

double eta_ou_closed_form(double a, double delta, double t) {
  return a * delta * std::exp((a - 1.0) * t);
}

EtaResidual eta_residual_check(const DriftModel& model, const MeasureFlow& flow,
                               const EtaProcess& eta, const ParticleMeasure& mu,
                               const ParticleMeasure& nu, std::int64_t n_paths,
                               std::uint64_t seed, int threads) {
  const TimeGrid grid = flow.grid;
  const int n = grid.n_steps;
  const int nh = model.obs_dim;
  const int nd = model.noise_dim;
  const int d = model.dim;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const std::size_t row = std::size_t(n) + 1;

  std::vector<double> vc(row * std::size_t(nh));
  for (std::size_t i = 0; i < vc.size(); ++i) vc[i] = eta.v[i] + eta.corr[i];

  const CounterRng inc(seed, RngStream::increments);
  const CounterRng init(seed, RngStream::init_draws);
  const InitialLaw mu_law(mu), nu_law(nu);
  const int nchunks = chunk_count(n_paths);

  struct Part {
    std::vector<double> sum, sumsq;
    std::int64_t count = 0;
  };
  std::vector<Part> parts(static_cast<std::size_t>(nchunks));
  parallel_chunks(n_paths, threads, [&](int ci, std::int64_t begin, std::int64_t end) {
    Part& pp = parts[std::size_t(ci)];
    pp.sum.assign(row * std::size_t(nh), 0.0);
    pp.sumsq.assign(row * std::size_t(nh), 0.0);
    CoeffScratch scr;
    scr.resize(model);
    std::vector<double> xm(std::size_t(d), 0.0), xn(std::size_t(d), 0.0), z(std::size_t(nd), 0.0),
        dwb(std::size_t(nd), 0.0), hm(std::size_t(nh), 0.0), hn(std::size_t(nh), 0.0), ebuf(std::size_t(nd), 0.0),
        local(row * std::size_t(nh));
    for (std::int64_t p = begin; p < end; ++p) {
      const double u = init.uniform(std::uint64_t(p), 0, 0);
      const double s = init.uniform(std::uint64_t(p), 0, 1);
      mu_law.sample(u, s, xm);
      nu_law.sample(u, s, xn);
      double m_run = 0.0;
      bool ok = true;
      for (int j = 0; j <= n; ++j) {
        model.h(xm, hm);
        model.h(xn, hn);
        const double* mf = flow.h_means.data() + std::size_t(j) * std::size_t(nh);
        for (int c = 0; c < nh; ++c)
          local[std::size_t(j) * std::size_t(nh) + std::size_t(c)] =
              (hn[std::size_t(c)] - hm[std::size_t(c)]) +
              (hm[std::size_t(c)] - mf[c]) * m_run;
        if (j == n) break;
        model.gradF(grid.time(j), xm, flow.interaction_mean(j), scr.grad);
        matvec(scr.grad, nd, nh,
               Span(vc.data() + std::size_t(j) * std::size_t(nh), std::size_t(nh)), ebuf);
        inc.normals(std::uint64_t(p), std::uint32_t(j), z);
        for (int c = 0; c < nd; ++c) dwb[std::size_t(c)] = sqdt * z[std::size_t(c)];
        m_run += dot(ebuf, dwb);
        euler_step_with_mean(model, grid.time(j), xm, flow.interaction_mean(j), dwb, dt, scr);
        euler_step_with_mean(model, grid.time(j), xn, flow.interaction_mean(j), dwb, dt, scr);
        if (!all_finite(xm) || !all_finite(xn)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      ++pp.count;
      for (std::size_t i = 0; i < local.size(); ++i) {
        pp.sum[i] += local[i];
        pp.sumsq[i] += local[i] * local[i];
      }
    }
  });

  std::vector<double> sum(row * std::size_t(nh), 0.0), sumsq(row * std::size_t(nh), 0.0);
  std::int64_t count = 0;
  for (const auto& pp : parts) {
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] += pp.sum[i];
      sumsq[i] += pp.sumsq[i];
    }
    count += pp.count;
  }
  if (count < 2) throw std::runtime_error("eta_residual_check: not enough valid paths");

  EtaResidual res;
  res.max_z.assign(row, 0.0);
  // The converged curve is itself a Monte-Carlo estimate over eta.n_paths
  // samples of the same integrand, so both sides contribute noise.
  const double both = std::sqrt(1.0 + double(count) / double(eta.n_paths));
  for (std::size_t j = 0; j < row; ++j) {
    for (int c = 0; c < nh; ++c) {
      const std::size_t i = j * std::size_t(nh) + std::size_t(c);
      const double mean = sum[i] / double(count);
      const double var =
          std::max(0.0, (sumsq[i] - sum[i] * sum[i] / double(count)) / double(count - 1));
      const double se = std::sqrt(var / double(count)) * both;
      const double diff = std::fabs(mean - vc[i]);
      double zscore;
      if (se > 0.0)
        zscore = diff / se;
      else
        zscore = diff <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
      res.max_z[j] = std::max(res.max_z[j], zscore);
    }
    res.overall_max_z = std::max(res.overall_max_z, res.max_z[j]);
  }
  return res;
}

}  // namespace mvsde
