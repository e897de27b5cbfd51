#include "mvsde/observables.hpp"

#include <algorithm>
#include <cmath>

namespace mvsde {

Observable obs_identity() {
  return {"id", [](Span x) { return x[0]; }};
}

Observable obs_coordinate(int index) {
  if (index < 0) throw std::invalid_argument("obs_coordinate: negative index");
  return {"coord:" + std::to_string(index),
          [index](Span x) { return x[std::size_t(index)]; }};
}

Observable obs_square() {
  return {"square", [](Span x) { return x[0] * x[0]; }};
}

Observable obs_power(double p) {
  return {"power:" + std::to_string(p), [p](Span x) { return norm_pow(x, p); }};
}

Observable obs_tanh() {
  return {"tanh", [](Span x) { return std::tanh(x[0]); }};
}

Observable obs_constant(double value) {
  return {"const:" + std::to_string(value), [value](Span) { return value; }};
}

Observable obs_table(std::vector<double> points, std::vector<double> values) {
  if (points.size() < 2 || points.size() != values.size())
    throw std::invalid_argument("obs_table: need matching point/value lists with >= 2 nodes");
  if (!std::is_sorted(points.begin(), points.end()))
    throw std::invalid_argument("obs_table: points must be sorted");
  auto fn = [pts = std::move(points), vals = std::move(values)](Span x) {
    const double v = x[0];
    if (v <= pts.front()) return vals.front();
    if (v >= pts.back()) return vals.back();
    const auto it = std::upper_bound(pts.begin(), pts.end(), v);
    const std::size_t hi = std::size_t(it - pts.begin());
    const double w = (v - pts[hi - 1]) / (pts[hi] - pts[hi - 1]);
    return vals[hi - 1] + w * (vals[hi] - vals[hi - 1]);
  };
  return {"table", std::move(fn)};
}

}  // namespace mvsde
