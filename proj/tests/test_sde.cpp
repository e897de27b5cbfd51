#include <doctest.h>

#include "mvsde/builtin.hpp"
#include "mvsde/sde.hpp"
#include "support/oracles.hpp"

using namespace mvsde;

namespace {

const ObsFn kIdObs = [](Span x, MutSpan out) { std::copy(x.begin(), x.end(), out.begin()); };

DriftModel custom_1d(VecFn b0, double sigma_value) {
  DriftModel m;
  m.name = "custom";
  m.dim = m.noise_dim = m.obs_dim = 1;
  m.b0 = std::move(b0);
  m.sigma = [sigma_value](double, Span, MutSpan out) { out[0] = sigma_value; };
  m.F = [](double, Span, Span, MutSpan out) { out[0] = 0.0; };
  m.gradF = [](double, Span, Span, MutSpan out) { out[0] = 0.0; };
  m.h = kIdObs;
  m.k = MomentOrder(1.0);
  m.K = [](double) { return 1.0; };
  m.alpha = [](double r) { return r; };
  return checked(std::move(m));
}

MeasureFlow zero_flow(const DriftModel& m, const TimeGrid& g) {
  return MeasureFlow::constant(g, ParticleMeasure::dirac(std::vector<double>(std::size_t(m.dim), 0.0)),
                               m.h, m.obs_dim, m.k);
}

}  // namespace

TEST_CASE("single steps") {
  const auto still = custom_1d([](double, Span, MutSpan out) { out[0] = 0.0; }, 1.0);
  const auto mu = ParticleMeasure::dirac({0.0});
  CHECK(euler_step(still, 0.0, std::vector<double>{1.5}, mu, std::vector<double>{0.0}, 0.1)[0] ==
        doctest::Approx(1.5));

  const auto driftful = custom_1d([](double, Span, MutSpan out) { out[0] = 1.0; }, 0.0);
  CHECK(euler_step(driftful, 0.0, std::vector<double>{0.0}, mu, std::vector<double>{0.7}, 0.1)[0] ==
        doctest::Approx(0.1));

  CHECK(euler_step(still, 0.0, std::vector<double>{2.0}, mu, std::vector<double>{0.3}, 0.1)[0] ==
        doctest::Approx(2.3));
  CHECK_THROWS_AS(
      euler_step(still, 0.0, std::vector<double>{0.0}, mu, std::vector<double>{0.0}, 0.0),
      std::invalid_argument);
}

TEST_CASE("simulation is deterministic and replayable") {
  const auto ou = make_mean_field_ou(0.5);
  const TimeGrid g{1.0, 50};
  const auto flow = zero_flow(ou, g);
  const InitialLaw x0(ParticleMeasure::uniform_on({{0.0}, {1.0}, {2.0}}));

  SimOptions one, two;
  one.threads = 1;
  two.threads = 2;
  const auto e1 = simulate_decoupled(ou, flow, x0, g, 300, 99, one);
  const auto e2 = simulate_decoupled(ou, flow, x0, g, 300, 99, two);
  CHECK(e1.states == e2.states);  // worker count never changes results

  // Replaying the integrator from the stored initial states with the
  // regenerated increments reproduces every state bitwise.
  CoeffScratch scr;
  scr.resize(ou);
  std::vector<double> x(1), dw(1);
  for (std::int64_t p = 0; p < e1.n_paths; p += 17) {
    x[0] = e1.state(p, 0)[0];
    for (int j = 0; j < g.n_steps; ++j) {
      e1.dw(p, j, dw);
      euler_step_with_mean(ou, g.time(j), x, flow.interaction_mean(j), dw, g.dt(), scr);
      CHECK(x[0] == e1.state(p, j + 1)[0]);
    }
  }

  // The materialized increments have the advertised normal statistics.
  const auto dws = e1.materialize_dw();
  MomentSums acc;
  const double sq = std::sqrt(g.dt());
  for (double v : dws) acc.add(v / sq);
  CHECK(std::fabs(acc.mean()) < 4.0 * acc.std_error());
  CHECK(acc.variance() == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("mean-reverting marginals match the closed form") {
  const auto ou = make_mean_field_ou(0.3);  // flow frozen at zero: plain reversion
  const TimeGrid g{1.0, 1000};
  const auto flow = zero_flow(ou, g);
  const auto ens =
      simulate_decoupled(ou, flow, InitialLaw(ParticleMeasure::dirac({1.0})), g, 100000, 2024, {});
  CHECK(ens.n_invalid == 0);

  const auto fm = functional_mean(ens, obs_identity(), g.n_steps, ou.k);
  const double bias_margin = 2.0 * g.dt();
  CHECK(std::fabs(fm.value - oracle::ou_mean(1.0, 1.0)) < 3.0 * fm.std_err + bias_margin);

  MomentSums acc;
  for (std::int64_t p = 0; p < ens.n_paths; ++p) acc.add(ens.state(p, g.n_steps)[0]);
  const double var = acc.variance();
  const double want = oracle::ou_var(1.0);
  // variance estimator scale: sd(var) ~ var sqrt(2/N)
  CHECK(std::fabs(var - want) < 4.0 * want * std::sqrt(2.0 / double(ens.n_paths)) + bias_margin);
}

TEST_CASE("noise-free paths track the reference integrator") {
  const auto ode = custom_1d([](double, Span x, MutSpan out) { out[0] = -x[0]; }, 0.0);
  const TimeGrid g{1.0, 100};
  const auto ens =
      simulate_decoupled(ode, zero_flow(ode, g), InitialLaw(ParticleMeasure::dirac({1.0})), g, 1, 7, {});
  const double ref = oracle::rk4([](double, double y) { return -y; }, 1.0, 0.0, 1.0, 4000);
  CHECK(std::fabs(ens.state(0, g.n_steps)[0] - ref) < g.dt());
}

TEST_CASE("weak error decays linearly in the step size") {
  const auto ou = make_mean_field_ou(0.3);
  const std::int64_t n_paths = 1000000;
  std::vector<double> dts, errs;
  for (int steps : {10, 20, 40}) {
    const TimeGrid g{1.0, steps};
    const auto ens = simulate_decoupled(ou, zero_flow(ou, g),
                                        InitialLaw(ParticleMeasure::dirac({1.0})), g, n_paths, 5, {});
    const auto fm = functional_mean(ens, obs_identity(), steps, ou.k);
    dts.push_back(g.dt());
    errs.push_back(std::fabs(fm.value - oracle::ou_mean(1.0, 1.0)));
  }
  // log-log slope across the three step sizes
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    const double lx = std::log(dts[i]), ly = std::log(errs[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double slope = (3.0 * sxy - sx * sy) / (3.0 * sxx - sx * sx);
  CHECK(slope > 0.7);
  CHECK(slope < 1.3);
}

TEST_CASE("functional means") {
  const auto ou = make_mean_field_ou(0.5);
  const TimeGrid g{0.5, 20};
  const auto ens = simulate_decoupled(ou, zero_flow(ou, g),
                                      InitialLaw(ParticleMeasure::dirac({2.0})), g, 5000, 11, {});
  const auto one = functional_mean(ens, obs_constant(1.0), g.n_steps, ou.k);
  CHECK(one.value == 1.0);
  CHECK(one.std_err == 0.0);

  const auto at0 = functional_mean(ens, obs_square(), 0, ou.k);
  CHECK(at0.value == 4.0);
  CHECK(at0.std_err == 0.0);

  CHECK_THROWS_AS(functional_mean(ens, obs_identity(), g.n_steps + 1, ou.k),
                  std::invalid_argument);
}

TEST_CASE("exploding paths are reported and excluded") {
  const auto boom = custom_1d(
      [](double, Span x, MutSpan out) {
        const double v = x[0];
        out[0] = v * v * v * v * v;
      },
      1.0);
  const TimeGrid g{2.0, 4};
  const auto ens = simulate_decoupled(boom, zero_flow(boom, g),
                                      InitialLaw(ParticleMeasure::dirac({5.0})), g, 64, 3, {});
  CHECK(ens.n_invalid == 64);
  for (std::int64_t p = 0; p < 64; ++p) {
    CHECK(ens.blowup_step[std::size_t(p)] >= 1);
    CHECK(all_finite(ens.state(p, g.n_steps)));  // frozen at the last finite value
  }
}
