#include "mvsde/model.hpp"

#include <Eigen/Dense>
#include <cstring>

#include "mvsde/rng.hpp"

namespace mvsde {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<double> random_point(const CounterRng& rng, std::uint64_t probe, std::uint32_t field,
                                 int dim, double center, double radius) {
  std::vector<double> x(std::size_t(dim), 0.0);
  for (int i = 0; i < dim; ++i)
    x[std::size_t(i)] = center + radius * (2.0 * rng.uniform(probe, field, std::uint32_t(i)) - 1.0);
  return x;
}

ParticleMeasure random_measure(const CounterRng& rng, std::uint64_t probe, std::uint32_t field,
                               int dim, const H2ProbeSpec& spec) {
  const int n = 1 + int(rng.uniform(probe, field, 0) * spec.max_atoms);
  std::vector<double> atoms;
  std::vector<double> weights(std::size_t(n), 0.0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < dim; ++c)
      atoms.push_back(spec.measure_center +
                      spec.measure_radius *
                          (2.0 * rng.uniform(probe, field + 1, std::uint32_t(i * dim + c)) - 1.0));
    weights[std::size_t(i)] = 0.05 + rng.uniform(probe, field + 2, std::uint32_t(i));
    sum += weights[std::size_t(i)];
  }
  for (double& w : weights) w /= sum;
  return ParticleMeasure(std::move(atoms), dim, std::move(weights));
}

// nu close to mu: same atoms, perturbed weights. Exercises the small
// total-variation regime of the continuity bound.
ParticleMeasure perturb_weights(const ParticleMeasure& mu, const CounterRng& rng,
                                std::uint64_t probe, std::uint32_t field) {
  const std::size_t n = mu.size();
  std::vector<double> weights(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weights[i] = mu.weight(i) * (0.75 + 0.5 * rng.uniform(probe, field, std::uint32_t(i)));
    sum += weights[i];
  }
  for (double& w : weights) w /= sum;
  return ParticleMeasure(mu.atoms_flat(), mu.dim(), std::move(weights));
}

}  // namespace

DriftModel checked(DriftModel model, const GradCheckOptions& opts) {
  require(model.dim > 0, "DriftModel: dim must be positive");
  require(model.noise_dim > 0, "DriftModel: noise_dim must be positive");
  require(model.obs_dim > 0, "DriftModel: obs_dim must be positive");
  require(bool(model.b0) && bool(model.sigma) && bool(model.F) && bool(model.gradF) &&
              bool(model.h),
          "DriftModel: all coefficient callbacks must be set");
  require(bool(model.K) && bool(model.alpha), "DriftModel: K and alpha must be set");
  require(model.k.k >= 0.0, "DriftModel: moment order must be >= 0");

  // gradF vs central differences of F at random (t, x, m) probes.
  const CounterRng rng(opts.seed, RngStream::scratch);
  const int nd = model.noise_dim, no = model.obs_dim;
  std::vector<double> fp(std::size_t(nd), 0.0), fm(std::size_t(nd), 0.0);
  std::vector<double> grad(std::size_t(nd) * std::size_t(no));
  for (int p = 0; p < opts.n_probes; ++p) {
    const double t = rng.uniform(std::uint64_t(p), 0, 0);
    auto x = random_point(rng, std::uint64_t(p), 1, model.dim, 0.0, opts.x_radius);
    auto m = random_point(rng, std::uint64_t(p), 2, no, 0.0, opts.m_radius);
    model.gradF(t, x, m, grad);
    for (int j = 0; j < no; ++j) {
      const double save = m[std::size_t(j)];
      m[std::size_t(j)] = save + opts.step;
      model.F(t, x, m, fp);
      m[std::size_t(j)] = save - opts.step;
      model.F(t, x, m, fm);
      m[std::size_t(j)] = save;
      for (int i = 0; i < nd; ++i) {
        const double fd = (fp[std::size_t(i)] - fm[std::size_t(i)]) / (2.0 * opts.step);
        const double g = grad[std::size_t(i) * std::size_t(no) + std::size_t(j)];
        if (std::fabs(fd - g) > opts.rel_tol * std::max(1.0, std::fabs(g)))
          throw std::invalid_argument("DriftModel: gradF disagrees with finite differences of F");
      }
    }
  }
  return model;
}

void eval_drift(const DriftModel& model, double t, Span x, Span m_mean, MutSpan out,
                CoeffScratch& scr) {
  model.b0(t, x, scr.b);
  model.F(t, x, m_mean, scr.f);
  model.sigma(t, x, scr.sig);
  for (int i = 0; i < model.dim; ++i) out[std::size_t(i)] = scr.b[std::size_t(i)];
  matvec_acc(scr.sig, model.dim, model.noise_dim, scr.f, out);
}

std::vector<double> drift(const DriftModel& model, double t, Span x, const ParticleMeasure& mu) {
  if (mu.dim() != model.dim) throw std::invalid_argument("drift: measure dimension mismatch");
  const auto m = observable_mean(mu, model.h, model.obs_dim);
  CoeffScratch scr;
  scr.resize(model);
  std::vector<double> out(std::size_t(model.dim));
  eval_drift(model, t, x, m, out, scr);
  return out;
}

std::vector<double> extrinsic_drift_derivative(const DriftModel& model, double t, Span x,
                                               const ParticleMeasure& mu, Span y) {
  const auto m = observable_mean(mu, model.h, model.obs_dim);
  std::vector<double> hy(std::size_t(model.obs_dim));
  model.h(y, hy);
  for (int i = 0; i < model.obs_dim; ++i) hy[std::size_t(i)] -= m[std::size_t(i)];
  std::vector<double> grad(std::size_t(model.noise_dim) * std::size_t(model.obs_dim));
  model.gradF(t, x, m, grad);
  std::vector<double> out(std::size_t(model.noise_dim));
  matvec(grad, model.noise_dim, model.obs_dim, hy, out);
  return out;
}

H2Report validate_h2(const DriftModel& model, const H2ProbeSpec& spec) {
  const CounterRng rng(spec.seed, RngStream::probes);
  H2Report report;
  report.n_probes = spec.n_probes;
  for (int p = 0; p < spec.n_probes; ++p) {
    const auto probe = std::uint64_t(p);
    const double t = spec.t_max * rng.uniform(probe, 10, 0);
    const auto x = random_point(rng, probe, 11, model.dim, 0.0, spec.x_radius);
    const auto y = random_point(rng, probe, 12, model.dim, 0.0, spec.y_radius);
    const auto mu = random_measure(rng, probe, 13, model.dim, spec);
    const bool close_pair = rng.uniform(probe, 16, 0) < 0.5;
    const auto nu = close_pair ? perturb_weights(mu, rng, probe, 17)
                               : random_measure(rng, probe, 18, model.dim, spec);

    const double kt = model.K(t);
    const double yk = norm_pow(y, model.k.k);

    // Growth bound, centered at the mu-average of the derivative (an upper
    // bound for the infimum over centering constants).
    const auto d_mu = extrinsic_drift_derivative(model, t, x, mu, y);
    std::vector<double> center(std::size_t(model.noise_dim), 0.0);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const auto di = extrinsic_drift_derivative(model, t, x, mu, mu.atom(i));
      axpy(mu.weight(i), di, center);
    }
    std::vector<double> diff = d_mu;
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= center[i];
    const double r2 = norm2(diff) / (kt * (1.0 + yk));
    if (r2 > report.dc2_max_ratio) {
      report.dc2_max_ratio = r2;
      report.dc2_worst_t = t;
    }

    // Continuity in the measure argument.
    const double tv = weighted_tv(mu, nu, model.k);
    if (tv > 0.0) {
      const auto d_nu = extrinsic_drift_derivative(model, t, x, nu, y);
      std::vector<double> gap = d_mu;
      for (std::size_t i = 0; i < gap.size(); ++i) gap[i] -= d_nu[i];
      const double den =
          kt * model.alpha(tv) * (1.0 + yk + moment(mu, model.k) + moment(nu, model.k));
      const double r3 = norm2(gap) / den;
      if (r3 > report.dc3_max_ratio) {
        report.dc3_max_ratio = r3;
        report.dc3_worst_t = t;
      }
    }
  }
  constexpr double kSlack = 1e-9;
  report.pass_dc2 = report.dc2_max_ratio <= 1.0 + kSlack;
  report.pass_dc3 = report.dc3_max_ratio <= 1.0 + kSlack;
  return report;
}

DriftModel embed(const HamiltonianModel& hm, const GradCheckOptions& opts) {
  require(hm.dim1 > 0 && hm.dim2 > 0, "HamiltonianModel: block dimensions must be positive");
  require(hm.dim2 <= 16, "HamiltonianModel: momentum block too large for the inline solver");
  const int d1 = hm.dim1, d2 = hm.dim2, d = d1 + d2, no = hm.obs_dim;

  DriftModel m;
  m.name = hm.name;
  m.dim = d;
  m.noise_dim = d;
  m.obs_dim = no;
  m.h = hm.h;
  m.k = hm.k;
  m.K = hm.K;
  m.alpha = hm.alpha;

  m.b0 = [Z1 = hm.Z1, d1, d2](double t, Span x, MutSpan out) {
    Z1(t, x, out.subspan(0, std::size_t(d1)));
    for (int i = 0; i < d2; ++i) out[std::size_t(d1 + i)] = 0.0;
  };
  m.sigma = [st = hm.sigma_tilde, d1, d2, d](double t, Span x, MutSpan out) {
    std::fill(out.begin(), out.end(), 0.0);
    double buf[256];
    st(t, x, MutSpan(buf, std::size_t(d2) * std::size_t(d2)));
    for (int i = 0; i < d2; ++i)
      for (int j = 0; j < d2; ++j)
        out[std::size_t(d1 + i) * std::size_t(d) + std::size_t(d1 + j)] =
            buf[std::size_t(i) * std::size_t(d2) + std::size_t(j)];
  };
  m.F = [Z2 = hm.Z2, st = hm.sigma_tilde, d1, d2](double t, Span x, Span mm, MutSpan out) {
    for (int i = 0; i < d1; ++i) out[std::size_t(i)] = 0.0;
    double a[256], rhs[16];
    st(t, x, MutSpan(a, std::size_t(d2) * std::size_t(d2)));
    Z2(t, x, mm, MutSpan(rhs, std::size_t(d2)));
    solve_inplace(a, d2, rhs);
    for (int i = 0; i < d2; ++i) out[std::size_t(d1 + i)] = rhs[i];
  };
  m.gradF = [gZ2 = hm.gradZ2, st = hm.sigma_tilde, d1, d2, no](double t, Span x, Span mm,
                                                               MutSpan out) {
    std::fill(out.begin(), out.end(), 0.0);
    double a0[256], a[256], g[256], col[16];
    st(t, x, MutSpan(a0, std::size_t(d2) * std::size_t(d2)));
    gZ2(t, x, mm, MutSpan(g, std::size_t(d2) * std::size_t(no)));
    for (int j = 0; j < no; ++j) {
      std::memcpy(a, a0, sizeof(double) * std::size_t(d2) * std::size_t(d2));
      for (int i = 0; i < d2; ++i) col[i] = g[std::size_t(i) * std::size_t(no) + std::size_t(j)];
      solve_inplace(a, d2, col);
      for (int i = 0; i < d2; ++i)
        out[std::size_t(d1 + i) * std::size_t(no) + std::size_t(j)] = col[i];
    }
  };
  return checked(std::move(m), opts);
}

SigmaTildeReport probe_sigma_tilde(const HamiltonianModel& hm, int n_probes, std::uint64_t seed,
                                   double t_max, double x_radius) {
  const CounterRng rng(seed, RngStream::probes);
  const int d2 = hm.dim2, d = hm.dim1 + hm.dim2;
  SigmaTildeReport rep;
  rep.n_probes = n_probes;
  rep.all_invertible = true;
  rep.min_cond = std::numeric_limits<double>::infinity();
  std::vector<double> buf(std::size_t(d2) * std::size_t(d2));
  for (int p = 0; p < n_probes; ++p) {
    const double t = t_max * rng.uniform(std::uint64_t(p), 0, 0);
    const auto x = random_point(rng, std::uint64_t(p), 1, d, 0.0, x_radius);
    hm.sigma_tilde(t, x, buf);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a(
        buf.data(), d2, d2);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 0.0)) {
      rep.all_invertible = false;
      rep.max_cond = std::numeric_limits<double>::infinity();
      continue;
    }
    const double cond = smax / smin;
    rep.min_cond = std::min(rep.min_cond, cond);
    rep.max_cond = std::max(rep.max_cond, cond);
  }
  return rep;
}

}  // namespace mvsde
