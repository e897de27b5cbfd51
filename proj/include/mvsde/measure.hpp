#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvsde/linalg.hpp"

namespace mvsde {

// Vector-valued observable: h(x) written into out.
using ObsFn = std::function<void(Span, MutSpan)>;

// Moment order k >= 0; the |x|^0 := 1 convention is fixed globally.
struct MomentOrder {
  double k = 0.0;
  MomentOrder() = default;
  MomentOrder(double kk) : k(kk) {
    if (!(k >= 0.0) || !std::isfinite(k))
      throw std::invalid_argument("MomentOrder: k must be finite and >= 0");
  }
};

// Finitely supported probability measure: atoms in R^d with weights summing
// to one. An empty weight vector means uniform weights 1/n, which large
// empirical measures rely on to avoid storing n identical values.
class ParticleMeasure {
 public:
  ParticleMeasure() = default;
  ParticleMeasure(std::vector<double> atoms_flat, int dim, std::vector<double> weights = {});

  static ParticleMeasure dirac(std::vector<double> point);
  // Uniform weights over the given points (all of equal dimension).
  static ParticleMeasure uniform_on(const std::vector<std::vector<double>>& points);

  int dim() const { return dim_; }
  std::size_t size() const { return dim_ > 0 ? atoms_.size() / std::size_t(dim_) : 0; }
  Span atom(std::size_t i) const { return Span(atoms_.data() + i * std::size_t(dim_), std::size_t(dim_)); }
  double weight(std::size_t i) const {
    return weights_.empty() ? 1.0 / double(size()) : weights_[i];
  }
  bool uniform_weights() const { return weights_.empty(); }
  const std::vector<double>& atoms_flat() const { return atoms_; }

  // Equality of measures: same atoms in the same order with the same masses
  // (a uniform-weight representation equals its materialized form).
  bool operator==(const ParticleMeasure& o) const {
    if (dim_ != o.dim_ || atoms_ != o.atoms_) return false;
    if (weights_ == o.weights_) return true;
    for (std::size_t i = 0; i < size(); ++i)
      if (weight(i) != o.weight(i)) return false;
    return true;
  }

 private:
  std::vector<double> atoms_;    // row-major, atom i = [i*dim, (i+1)*dim)
  std::vector<double> weights_;  // empty => uniform
  int dim_ = 0;
};

// mu(|.|^k)
double moment(const ParticleMeasure& mu, MomentOrder k);

// Weighted total variation distance: sup over |f| <= 1 + |.|^k of
// |mu(f) - nu(f)|. For finitely supported measures the supremum is attained
// pointwise on the support union, giving
//   sum_x (1 + |x|^k) |mu({x}) - nu({x})|.
double weighted_tv(const ParticleMeasure& mu, const ParticleMeasure& nu, MomentOrder k);

// Convex combination (1-eps) mu + eps nu; atoms present in both inputs are
// merged by exact coordinate equality with summed weights.
ParticleMeasure mix(const ParticleMeasure& mu, const ParticleMeasure& nu, double eps);

// mu(h) for a vector observable.
std::vector<double> observable_mean(const ParticleMeasure& mu, const ObsFn& h, int obs_dim);

// mu(id): the mean point.
std::vector<double> mean_point(const ParticleMeasure& mu);

}  // namespace mvsde
