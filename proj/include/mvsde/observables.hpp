#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvsde/linalg.hpp"

namespace mvsde {

// Scalar test function f for semigroup functionals.
struct Observable {
  std::string name;
  std::function<double(Span)> fn;

  double operator()(Span x) const { return fn(x); }
};

Observable obs_identity();              // x -> x[0]
Observable obs_coordinate(int index);   // x -> x[index]
Observable obs_square();                // x -> x[0]^2
Observable obs_power(double p);         // x -> |x|^p
Observable obs_tanh();                  // x -> tanh(x[0])
Observable obs_constant(double value);
// Piecewise-linear 1-d table on x[0], clamped outside the node range.
Observable obs_table(std::vector<double> points, std::vector<double> values);

}  // namespace mvsde
