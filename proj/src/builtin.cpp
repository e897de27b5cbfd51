#include "mvsde/builtin.hpp"

#include <nlohmann/json.hpp>

namespace mvsde {

namespace {

ObsFn identity_obs() {
  return [](Span x, MutSpan out) { std::copy(x.begin(), x.end(), out.begin()); };
}

std::function<double(double)> constant_k(double value) {
  return [value](double) { return value; };
}

std::function<double(double)> identity_alpha() {
  return [](double r) { return r; };
}

}  // namespace

DriftModel make_mean_field_ou(double a, int dim) {
  DriftModel m;
  m.name = "mean-field-ou";
  m.dim = dim;
  m.noise_dim = dim;
  m.obs_dim = dim;
  m.b0 = [](double, Span x, MutSpan out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = -x[i];
  };
  m.sigma = [dim](double, Span, MutSpan out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < dim; ++i) out[std::size_t(i) * std::size_t(dim) + std::size_t(i)] = 1.0;
  };
  m.F = [a](double, Span, Span mm, MutSpan out) {
    for (std::size_t i = 0; i < mm.size(); ++i) out[i] = a * mm[i];
  };
  m.gradF = [a, dim](double, Span, Span, MutSpan out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < dim; ++i) out[std::size_t(i) * std::size_t(dim) + std::size_t(i)] = a;
  };
  m.h = identity_obs();
  m.k = MomentOrder(1.0);
  m.K = constant_k(std::max(std::fabs(a), 1e-12));
  m.alpha = identity_alpha();
  return checked(std::move(m));
}

DriftModel make_tanh_interaction() {
  DriftModel m;
  m.name = "tanh-interaction";
  m.dim = 1;
  m.noise_dim = 1;
  m.obs_dim = 1;
  m.b0 = [](double, Span x, MutSpan out) { out[0] = -x[0]; };
  m.sigma = [](double, Span, MutSpan out) { out[0] = 1.0; };
  m.F = [](double, Span, Span mm, MutSpan out) { out[0] = std::tanh(mm[0]); };
  m.gradF = [](double, Span, Span mm, MutSpan out) {
    const double th = std::tanh(mm[0]);
    out[0] = 1.0 - th * th;
  };
  m.h = identity_obs();
  m.k = MomentOrder(1.0);
  m.K = constant_k(1.0);
  m.alpha = identity_alpha();
  return checked(std::move(m));
}

DriftModel make_quadratic_interaction() {
  DriftModel m;
  m.name = "quadratic-interaction";
  m.dim = 1;
  m.noise_dim = 1;
  m.obs_dim = 1;
  m.b0 = [](double, Span x, MutSpan out) { out[0] = -x[0]; };
  m.sigma = [](double, Span, MutSpan out) { out[0] = 1.0; };
  m.F = [](double, Span, Span mm, MutSpan out) { out[0] = mm[0] * mm[0]; };
  m.gradF = [](double, Span, Span mm, MutSpan out) { out[0] = 2.0 * mm[0]; };
  m.h = identity_obs();
  m.k = MomentOrder(1.0);
  m.K = constant_k(1.0);
  m.alpha = identity_alpha();
  return checked(std::move(m));
}

HamiltonianModel make_hamiltonian_kinetic(int dim1, double omega2, double friction, double kappa,
                                          double sigma) {
  if (dim1 < 1) throw std::invalid_argument("make_hamiltonian_kinetic: dim1 must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("make_hamiltonian_kinetic: sigma must be > 0");
  HamiltonianModel hm;
  hm.name = "hamiltonian-kinetic";
  hm.dim1 = dim1;
  hm.dim2 = dim1;
  const int d = 2 * dim1;
  hm.obs_dim = d;
  hm.Z1 = [dim1](double, Span x, MutSpan out) {
    for (int i = 0; i < dim1; ++i) out[std::size_t(i)] = x[std::size_t(dim1 + i)];
  };
  hm.Z2 = [dim1, omega2, friction, kappa](double, Span x, Span mm, MutSpan out) {
    for (int i = 0; i < dim1; ++i) {
      const double q = x[std::size_t(i)];
      const double p = x[std::size_t(dim1 + i)];
      out[std::size_t(i)] = -omega2 * q - friction * p + kappa * (mm[std::size_t(i)] - q);
    }
  };
  // dZ2/dm = kappa on the position block of the interaction mean.
  hm.gradZ2 = [dim1, d, kappa](double, Span, Span, MutSpan out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < dim1; ++i) out[std::size_t(i) * std::size_t(d) + std::size_t(i)] = kappa;
  };
  hm.sigma_tilde = [dim1, sigma](double, Span, MutSpan out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < dim1; ++i) out[std::size_t(i) * std::size_t(dim1) + std::size_t(i)] = sigma;
  };
  hm.h = identity_obs();
  hm.k = MomentOrder(1.0);
  hm.K = constant_k(std::max(kappa / sigma, 1e-12));
  hm.alpha = identity_alpha();
  return hm;
}

DriftModel model_from_config(const std::string& name, const nlohmann::json& params) {
  if (name == "mean-field-ou") {
    const double a = params.value("a", 0.5);
    const int dim = params.value("dim", 1);
    return make_mean_field_ou(a, dim);
  }
  if (name == "tanh-interaction") return make_tanh_interaction();
  if (name == "quadratic-interaction") return make_quadratic_interaction();
  if (name == "hamiltonian-kinetic") {
    const int d1 = params.value("d1", 1);
    const double omega2 = params.value("omega2", 1.0);
    const double friction = params.value("friction", 0.5);
    const double kappa = params.value("kappa", 0.5);
    const double sigma = params.value("sigma", 1.0);
    return embed(make_hamiltonian_kinetic(d1, omega2, friction, kappa, sigma));
  }
  throw std::invalid_argument("unknown model name: " + name);
}

}  // namespace mvsde
