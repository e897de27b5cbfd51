#pragma once

// Test-only reference implementations. Everything here is deliberately
// independent of the library's computation paths: plain RK4 for the scalar
// reference curves, exhaustive enumeration for the weighted total variation,
// and textbook closed forms for the linear model.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mvsde/measure.hpp"

namespace oracle {

// Classical RK4 for y' = f(t, y) on [t0, t1] with n uniform steps.
inline double rk4(const std::function<double(double, double)>& f, double y0, double t0, double t1,
                  int n) {
  double y = y0;
  const double h = (t1 - t0) / n;
  for (int i = 0; i < n; ++i) {
    const double t = t0 + i * h;
    const double k1 = f(t, y);
    const double k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    const double k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    const double k4 = f(t + h, y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

// Supremum of mu(f) - nu(f) over f with |f(x)| <= 1 + |x|^k, by enumerating
// every sign pattern on the support union (the optimum sits at the envelope).
inline double brute_force_weighted_tv(const mvsde::ParticleMeasure& mu,
                                      const mvsde::ParticleMeasure& nu, double k) {
  struct Entry {
    std::vector<double> atom;
    double net = 0.0;
  };
  std::vector<Entry> entries;
  auto absorb = [&](const mvsde::ParticleMeasure& m, double sign) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      const mvsde::Span a = m.atom(i);
      bool found = false;
      for (auto& e : entries) {
        if (e.atom.size() == a.size() && std::equal(e.atom.begin(), e.atom.end(), a.begin())) {
          e.net += sign * m.weight(i);
          found = true;
          break;
        }
      }
      if (!found) entries.push_back({{a.begin(), a.end()}, sign * m.weight(i)});
    }
  };
  absorb(mu, +1.0);
  absorb(nu, -1.0);
  if (entries.size() > 20) throw std::runtime_error("brute force limited to 20 atoms");
  double best = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t(1) << entries.size()); ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const double env = 1.0 + mvsde::norm_pow(entries[i].atom, k);
      s += (mask >> i & 1 ? env : -env) * entries[i].net;
    }
    best = std::max(best, s);
  }
  return best;
}

// Linear (mean-reverting) reference quantities.
inline double ou_mean(double x0, double t) { return x0 * std::exp(-t); }
inline double ou_var(double t) { return 0.5 * (1.0 - std::exp(-2.0 * t)); }

// Flow mean under interaction strength a: m' = (a - 1) m.
inline double flow_mean(double a, double m0, double t) { return m0 * std::exp((a - 1.0) * t); }

// Correlation curve for the linear model: c' = (a - 1) c + a e^{-t} delta.
inline double corr_curve_rk4(double a, double delta, double t, int n = 4000) {
  return rk4([a, delta](double s, double c) { return (a - 1.0) * c + a * std::exp(-s) * delta; },
             0.0, 0.0, t, n);
}

}  // namespace oracle
