#include "mvsde/mckean.hpp"

#include <algorithm>
#include <cstdio>

#include "mvsde/parallel.hpp"

namespace mvsde {

namespace {

// Slice-major path storage for one Picard iterate: atom (j, p) lives at
// atoms[(j * N + p) * d]. Slice-major keeps measure construction and the
// paired-distance pass contiguous.
struct RawFlow {
  std::vector<double> atoms;
  std::vector<std::uint8_t> valid;
  std::vector<double> h_means;  // (n+1) * nh
  std::vector<double> k_moms;   // n+1
  std::int64_t n_valid = 0;
};

struct SlicePartials {
  std::vector<double> h_sum;   // n * nh, slices 1..n
  std::vector<double> k_sum;   // n
  std::vector<double> bl_sum;  // n
  std::int64_t valid = 0;
  std::int64_t pairs = 0;
};

}  // namespace

PicardResult picard_flow(const DriftModel& model, const InitialLaw& mu0, const TimeGrid& grid,
                         std::int64_t n_paths, std::uint64_t seed, const PicardOptions& opts) {
  grid.validate();
  if (mu0.dim() != model.dim) throw std::invalid_argument("picard_flow: dimension mismatch");
  if (n_paths < 1 || n_paths > std::int64_t(1) << 32)
    throw std::invalid_argument("picard_flow: n_paths out of range");

  PicardResult result;
  PicardDiag& diag = result.diag;
  if (opts.validate_model) {
    const H2Report rep = validate_h2(model, opts.probe);
    if (!rep.pass()) {
      diag.h2_warning = true;
      std::fprintf(stderr,
                   "mvsde: model '%s' fails the structural bound spot-check "
                   "(growth ratio %.3g, continuity ratio %.3g); proceeding anyway\n",
                   model.name.c_str(), rep.dc2_max_ratio, rep.dc3_max_ratio);
    }
  }

  const int n = grid.n_steps;
  const int d = model.dim;
  const int nh = model.obs_dim;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const double lambda = opts.lambda > 0.0 ? opts.lambda : 10.0 / grid.horizon;
  const std::size_t slice_stride = std::size_t(n_paths) * std::size_t(d);

  const auto h0 = observable_mean(mu0.law(), model.h, nh);
  const double k0 = moment(mu0.law(), model.k);

  const CounterRng inc(seed, RngStream::increments);
  const CounterRng init(seed, RngStream::init_draws);

  RawFlow prev, cur;
  auto alloc = [&](RawFlow& f) {
    f.atoms.resize((std::size_t(n) + 1) * slice_stride);
    f.valid.assign(std::size_t(n_paths), 1);
    f.h_means.resize((std::size_t(n) + 1) * std::size_t(nh));
    f.k_moms.resize(std::size_t(n) + 1);
  };
  alloc(prev);
  alloc(cur);

  // Iteration 0: the constant flow mu0.
  for (int j = 0; j <= n; ++j) {
    std::copy(h0.begin(), h0.end(), prev.h_means.begin() + std::size_t(j) * std::size_t(nh));
    prev.k_moms[std::size_t(j)] = k0;
  }
  bool prev_is_constant = true;

  const int nchunks = chunk_count(n_paths);
  bool any_support_mismatch = false;

  const int iter_budget = opts.force_iterations > 0 ? opts.force_iterations : opts.max_iter;
  for (int iter = 1; iter <= iter_budget; ++iter) {
    // Pass 1: integrate every path against the previous flow's means.
    parallel_chunks(n_paths, opts.threads, [&](int, std::int64_t begin, std::int64_t end) {
      CoeffScratch scr;
      scr.resize(model);
      std::vector<double> z(std::size_t(model.noise_dim)), dwb(std::size_t(model.noise_dim));
      std::vector<double> x(std::size_t(d), 0.0);
      for (std::int64_t p = begin; p < end; ++p) {
        const double u = init.uniform(std::uint64_t(p), 0, 0);
        const double s = init.uniform(std::uint64_t(p), 0, 1);
        mu0.sample(u, s, x);
        cur.valid[std::size_t(p)] = 1;
        std::copy(x.begin(), x.end(), cur.atoms.data() + std::size_t(p) * std::size_t(d));
        for (int j = 0; j < n; ++j) {
          inc.normals(std::uint64_t(p), std::uint32_t(j), z);
          for (int c = 0; c < model.noise_dim; ++c) dwb[std::size_t(c)] = sqdt * z[std::size_t(c)];
          euler_step_with_mean(
              model, grid.time(j), x,
              Span(prev.h_means.data() + std::size_t(j) * std::size_t(nh), std::size_t(nh)), dwb,
              dt, scr);
          double* slot =
              cur.atoms.data() + (std::size_t(j + 1) * std::size_t(n_paths) + std::size_t(p)) * std::size_t(d);
          if (!all_finite(x)) {
            cur.valid[std::size_t(p)] = 0;
            const double* frozen =
                cur.atoms.data() + (std::size_t(j) * std::size_t(n_paths) + std::size_t(p)) * std::size_t(d);
            for (int r = j + 1; r <= n; ++r)
              std::copy(frozen, frozen + d,
                        cur.atoms.data() +
                            (std::size_t(r) * std::size_t(n_paths) + std::size_t(p)) * std::size_t(d));
            break;
          }
          std::copy(x.begin(), x.end(), slot);
        }
      }
    });

    // Pass 2: per-slice means, moments, and the paired distance terms,
    // restricted to paths valid in this iterate (and, for pairing, in the
    // previous one as well).
    std::vector<SlicePartials> parts(static_cast<std::size_t>(nchunks));
    parallel_chunks(n_paths, opts.threads, [&](int ci, std::int64_t begin, std::int64_t end) {
      SlicePartials& pp = parts[std::size_t(ci)];
      pp.h_sum.assign(std::size_t(n) * std::size_t(nh), 0.0);
      pp.k_sum.assign(std::size_t(n), 0.0);
      pp.bl_sum.assign(std::size_t(n), 0.0);
      std::vector<double> hbuf(std::size_t(nh), 0.0), diff(std::size_t(d), 0.0);
      for (std::int64_t p = begin; p < end; ++p) {
        if (!cur.valid[std::size_t(p)]) continue;
        ++pp.valid;
        const bool paired = !prev_is_constant && prev.valid[std::size_t(p)];
        if (paired) ++pp.pairs;
        for (int j = 1; j <= n; ++j) {
          const double* xc =
              cur.atoms.data() + (std::size_t(j) * std::size_t(n_paths) + std::size_t(p)) * std::size_t(d);
          const Span x(xc, std::size_t(d));
          model.h(x, hbuf);
          double* hs = pp.h_sum.data() + std::size_t(j - 1) * std::size_t(nh);
          for (int c = 0; c < nh; ++c) hs[c] += hbuf[std::size_t(c)];
          pp.k_sum[std::size_t(j - 1)] += norm_pow(x, model.k.k);
          if (paired) {
            const double* xp = prev.atoms.data() +
                               (std::size_t(j) * std::size_t(n_paths) + std::size_t(p)) * std::size_t(d);
            for (int c = 0; c < d; ++c) diff[std::size_t(c)] = xc[c] - xp[c];
            pp.bl_sum[std::size_t(j - 1)] += std::min(2.0, norm2(diff));
          }
        }
      }
    });

    // Deterministic chunk-order reduction.
    std::vector<double> h_sum(std::size_t(n) * std::size_t(nh), 0.0);
    std::vector<double> k_sum(std::size_t(n), 0.0);
    std::vector<double> bl_sum(std::size_t(n), 0.0);
    std::int64_t n_valid = 0, n_pairs = 0;
    for (const auto& pp : parts) {
      for (std::size_t i = 0; i < h_sum.size(); ++i) h_sum[i] += pp.h_sum[i];
      for (std::size_t i = 0; i < k_sum.size(); ++i) {
        k_sum[i] += pp.k_sum[i];
        bl_sum[i] += pp.bl_sum[i];
      }
      n_valid += pp.valid;
      n_pairs += pp.pairs;
    }
    if (n_valid == 0) throw std::runtime_error("picard_flow: every path blew up");
    cur.n_valid = n_valid;
    diag.blowups = n_paths - n_valid;

    std::copy(h0.begin(), h0.end(), cur.h_means.begin());
    cur.k_moms[0] = k0;
    for (int j = 1; j <= n; ++j) {
      for (int c = 0; c < nh; ++c)
        cur.h_means[std::size_t(j) * std::size_t(nh) + std::size_t(c)] =
            h_sum[std::size_t(j - 1) * std::size_t(nh) + std::size_t(c)] / double(n_valid);
      cur.k_moms[std::size_t(j)] = k_sum[std::size_t(j - 1)] / double(n_valid);
    }

    // Distance to the previous iterate. Against the constant initial guess
    // the pairing is unavailable, so the independent-coupling bound against
    // mu0's atoms is used for the bounded-Lipschitz part.
    double dist = 0.0;
    if (prev_is_constant) {
      const ParticleMeasure& m0 = mu0.law();
      std::vector<SlicePartials> dparts(static_cast<std::size_t>(nchunks));
      parallel_chunks(n_paths, opts.threads, [&](int ci, std::int64_t begin, std::int64_t end) {
        SlicePartials& pp = dparts[std::size_t(ci)];
        pp.bl_sum.assign(std::size_t(n), 0.0);
        std::vector<double> diff(std::size_t(d), 0.0);
        for (std::int64_t p = begin; p < end; ++p) {
          if (!cur.valid[std::size_t(p)]) continue;
          for (int j = 1; j <= n; ++j) {
            const double* xc = cur.atoms.data() +
                               (std::size_t(j) * std::size_t(n_paths) + std::size_t(p)) * std::size_t(d);
            double acc = 0.0;
            for (std::size_t q = 0; q < m0.size(); ++q) {
              const Span a = m0.atom(q);
              for (int c = 0; c < d; ++c) diff[std::size_t(c)] = xc[c] - a[std::size_t(c)];
              acc += m0.weight(q) * std::min(2.0, norm2(diff));
            }
            pp.bl_sum[std::size_t(j - 1)] += acc;
          }
        }
      });
      for (int j = 1; j <= n; ++j) {
        double bl = 0.0;
        for (const auto& pp : dparts) bl += pp.bl_sum[std::size_t(j - 1)];
        bl /= double(n_valid);
        const double slice = std::fabs(cur.k_moms[std::size_t(j)] - prev.k_moms[std::size_t(j)]) + bl;
        dist = std::max(dist, std::exp(-lambda * grid.time(j)) * slice);
      }
      any_support_mismatch = true;
    } else {
      for (int j = 1; j <= n; ++j) {
        const double bl = n_pairs > 0 ? bl_sum[std::size_t(j - 1)] / double(n_pairs) : 0.0;
        if (bl > 0.0) any_support_mismatch = true;
        const double slice = std::fabs(cur.k_moms[std::size_t(j)] - prev.k_moms[std::size_t(j)]) + bl;
        dist = std::max(dist, std::exp(-lambda * grid.time(j)) * slice);
      }
    }
    diag.distances.push_back(dist);
    diag.iterations = iter;
    std::swap(prev, cur);
    prev_is_constant = false;
    if (opts.force_iterations > 0) {
      if (iter == opts.force_iterations) {
        diag.converged = dist <= opts.tol;
        break;
      }
    } else if (dist <= opts.tol) {
      diag.converged = true;
      break;
    }
  }
  diag.surrogate_distance = any_support_mismatch;

  // Materialize the final iterate (now in prev). The flow's t=0 measure is
  // the prescribed initial law itself.
  cur.atoms.clear();
  cur.atoms.shrink_to_fit();
  MeasureFlow flow;
  flow.grid = grid;
  flow.obs_dim = nh;
  flow.k_order = model.k.k;
  flow.h_means = prev.h_means;
  flow.k_moments = prev.k_moms;
  flow.measures.reserve(std::size_t(n) + 1);
  flow.measures.push_back(mu0.law());
  for (int j = 1; j <= n; ++j) {
    std::vector<double> atoms;
    atoms.reserve(std::size_t(prev.n_valid) * std::size_t(d));
    const double* slice = prev.atoms.data() + std::size_t(j) * slice_stride;
    for (std::int64_t p = 0; p < n_paths; ++p)
      if (prev.valid[std::size_t(p)])
        atoms.insert(atoms.end(), slice + std::size_t(p) * std::size_t(d),
                     slice + (std::size_t(p) + 1) * std::size_t(d));
    flow.measures.emplace_back(std::move(atoms), d);
  }
  result.flow = std::move(flow);
  return result;
}

MeasureFlow particle_flow(const DriftModel& model, const ParticleMeasure& mu0,
                          const TimeGrid& grid, std::int64_t n_particles, std::uint64_t seed,
                          const ParticleOptions& opts) {
  grid.validate();
  if (n_particles < 2) throw std::invalid_argument("particle_flow: need at least 2 particles");
  if (mu0.dim() != model.dim) throw std::invalid_argument("particle_flow: dimension mismatch");
  if (opts.stream_permutation && std::int64_t(opts.stream_permutation->size()) != n_particles)
    throw std::invalid_argument("particle_flow: permutation size mismatch");

  const int n = grid.n_steps;
  const int d = model.dim;
  const int nh = model.obs_dim;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);

  const CounterRng inc(seed, RngStream::increments);
  const CounterRng init(seed, RngStream::init_draws);
  const InitialLaw law(mu0);
  auto stream_of = [&](std::int64_t i) {
    return opts.stream_permutation ? std::uint64_t((*opts.stream_permutation)[std::size_t(i)])
                                   : std::uint64_t(i);
  };

  std::vector<double> states(std::size_t(n_particles) * std::size_t(d));
  std::vector<std::uint8_t> valid(std::size_t(n_particles), 1);
  parallel_chunks(n_particles, opts.threads, [&](int, std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      const std::uint64_t sp = stream_of(i);
      const double u = init.uniform(sp, 0, 0);
      const double s = init.uniform(sp, 0, 1);
      law.sample(u, s, MutSpan(states.data() + std::size_t(i) * std::size_t(d), std::size_t(d)));
    }
  });

  MeasureFlow flow;
  flow.grid = grid;
  flow.obs_dim = nh;
  flow.k_order = model.k.k;
  flow.measures.reserve(std::size_t(n) + 1);
  flow.h_means.resize((std::size_t(n) + 1) * std::size_t(nh));
  flow.k_moments.resize(std::size_t(n) + 1);

  const int nchunks = chunk_count(n_particles);
  std::vector<double> hbar(std::size_t(nh), 0.0);
  std::int64_t blowups = 0;

  for (int j = 0; j <= n; ++j) {
    // Empirical summaries of the instantaneous population.
    std::vector<SlicePartials> parts(static_cast<std::size_t>(nchunks));
    parallel_chunks(n_particles, opts.threads, [&](int ci, std::int64_t begin, std::int64_t end) {
      SlicePartials& pp = parts[std::size_t(ci)];
      pp.h_sum.assign(std::size_t(nh), 0.0);
      pp.k_sum.assign(1, 0.0);
      std::vector<double> hbuf(std::size_t(nh), 0.0);
      for (std::int64_t i = begin; i < end; ++i) {
        if (!valid[std::size_t(i)]) continue;
        ++pp.valid;
        const Span x(states.data() + std::size_t(i) * std::size_t(d), std::size_t(d));
        model.h(x, hbuf);
        for (int c = 0; c < nh; ++c) pp.h_sum[std::size_t(c)] += hbuf[std::size_t(c)];
        pp.k_sum[0] += norm_pow(x, model.k.k);
      }
    });
    std::int64_t n_valid = 0;
    std::fill(hbar.begin(), hbar.end(), 0.0);
    double ksum = 0.0;
    for (const auto& pp : parts) {
      n_valid += pp.valid;
      for (int c = 0; c < nh; ++c) hbar[std::size_t(c)] += pp.h_sum[std::size_t(c)];
      ksum += pp.k_sum[0];
    }
    if (n_valid == 0) throw std::runtime_error("particle_flow: every particle blew up");
    for (int c = 0; c < nh; ++c) hbar[std::size_t(c)] /= double(n_valid);

    std::copy(hbar.begin(), hbar.end(), flow.h_means.begin() + std::size_t(j) * std::size_t(nh));
    flow.k_moments[std::size_t(j)] = ksum / double(n_valid);
    std::vector<double> atoms;
    atoms.reserve(std::size_t(n_valid) * std::size_t(d));
    for (std::int64_t i = 0; i < n_particles; ++i)
      if (valid[std::size_t(i)])
        atoms.insert(atoms.end(), states.begin() + std::size_t(i) * std::size_t(d),
                     states.begin() + (std::size_t(i) + 1) * std::size_t(d));
    flow.measures.emplace_back(std::move(atoms), d);

    if (j == n) break;
    parallel_chunks(n_particles, opts.threads, [&](int, std::int64_t begin, std::int64_t end) {
      CoeffScratch scr;
      scr.resize(model);
      std::vector<double> z(std::size_t(model.noise_dim)), dwb(std::size_t(model.noise_dim));
      for (std::int64_t i = begin; i < end; ++i) {
        if (!valid[std::size_t(i)]) continue;
        MutSpan x(states.data() + std::size_t(i) * std::size_t(d), std::size_t(d));
        inc.normals(stream_of(i), std::uint32_t(j), z);
        for (int c = 0; c < model.noise_dim; ++c) dwb[std::size_t(c)] = sqdt * z[std::size_t(c)];
        std::vector<double> before(x.begin(), x.end());
        euler_step_with_mean(model, grid.time(j), x, hbar, dwb, dt, scr);
        if (!all_finite(x)) {
          std::copy(before.begin(), before.end(), x.begin());
          valid[std::size_t(i)] = 0;
        }
      }
    });
  }
  for (auto v : valid)
    if (!v) ++blowups;
  if (blowups > 0)
    std::fprintf(stderr, "mvsde: particle_flow dropped %lld exploded particles\n",
                 (long long)blowups);
  return flow;
}

}  // namespace mvsde
