#pragma once

#include "mvsde/model.hpp"

#include <nlohmann/json_fwd.hpp>

namespace mvsde {

// Linear mean-field model: b0 = -x, sigma = I, interaction a * mu(id).
// The flow mean obeys m' = (a - 1) m, which makes every downstream quantity
// available in closed form; k = 1, K = |a|, alpha(r) = r.
DriftModel make_mean_field_ou(double a, int dim = 1);

// Bounded nonlinear interaction: b0 = -x, sigma = 1, drift shift
// tanh(mu(id)); k = 1, K = 1, alpha(r) = r.
DriftModel make_tanh_interaction();

// Mean-field kinetic oscillator in Hamiltonian form: positions dq = p dt,
// momenta dp = (-omega2 q - friction p + kappa (mean_q - q)) dt + sigma dB.
HamiltonianModel make_hamiltonian_kinetic(int dim1, double omega2, double friction, double kappa,
                                          double sigma);

// Name-keyed factory for configuration files. Known names:
//   "mean-field-ou"       params: a, dim
//   "tanh-interaction"    params: none
//   "quadratic-interaction"  params: none (violates the growth bound; for
//                            validator exercises)
//   "hamiltonian-kinetic" params: d1, omega2, friction, kappa, sigma
DriftModel model_from_config(const std::string& name, const nlohmann::json& params);

// F(x, m) = m^2 with h = id: the measure derivative grows with the mean, so
// the growth bound fails on wide probe boxes.
DriftModel make_quadratic_interaction();

}  // namespace mvsde
