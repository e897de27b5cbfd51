#include "mvsde/measure.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>

namespace mvsde {

namespace {

constexpr double kWeightSumTol = 1e-12;

// Byte key for exact atom identity; -0.0 is canonicalized to 0.0 so that
// numerically equal coordinates always merge.
std::string atom_key(Span x) {
  std::string key(x.size() * sizeof(double), '\0');
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x[i] == 0.0 ? 0.0 : x[i];
    std::memcpy(key.data() + i * sizeof(double), &v, sizeof(double));
  }
  return key;
}

}  // namespace

ParticleMeasure::ParticleMeasure(std::vector<double> atoms_flat, int dim,
                                 std::vector<double> weights)
    : atoms_(std::move(atoms_flat)), weights_(std::move(weights)), dim_(dim) {
  if (dim_ <= 0) throw std::invalid_argument("ParticleMeasure: dim must be positive");
  if (atoms_.empty() || atoms_.size() % std::size_t(dim_) != 0)
    throw std::invalid_argument("ParticleMeasure: atom list empty or not a multiple of dim");
  for (double v : atoms_)
    if (!std::isfinite(v)) throw std::invalid_argument("ParticleMeasure: non-finite atom");
  if (!weights_.empty()) {
    if (weights_.size() != size())
      throw std::invalid_argument("ParticleMeasure: weights/atoms length mismatch");
    double sum = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw std::invalid_argument("ParticleMeasure: negative weight");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > kWeightSumTol)
      throw std::invalid_argument("ParticleMeasure: weights must sum to 1");
  }
}

ParticleMeasure ParticleMeasure::dirac(std::vector<double> point) {
  const int d = int(point.size());
  return ParticleMeasure(std::move(point), d);
}

ParticleMeasure ParticleMeasure::uniform_on(const std::vector<std::vector<double>>& points) {
  if (points.empty()) throw std::invalid_argument("uniform_on: no points");
  const int d = int(points.front().size());
  std::vector<double> flat;
  flat.reserve(points.size() * std::size_t(d));
  for (const auto& p : points) {
    if (int(p.size()) != d) throw std::invalid_argument("uniform_on: inconsistent dimensions");
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return ParticleMeasure(std::move(flat), d);
}

double moment(const ParticleMeasure& mu, MomentOrder k) {
  double s = 0.0;
  const std::size_t n = mu.size();
  for (std::size_t i = 0; i < n; ++i) s += mu.weight(i) * norm_pow(mu.atom(i), k.k);
  return s;
}

double weighted_tv(const ParticleMeasure& mu, const ParticleMeasure& nu, MomentOrder k) {
  if (mu.dim() != nu.dim())
    throw std::invalid_argument("weighted_tv: dimension mismatch");
  // Net signed weight per distinct atom over the support union.
  std::unordered_map<std::string, std::pair<std::size_t, double>> net;  // key -> (atom idx owner, net)
  std::vector<Span> rep;
  rep.reserve(mu.size() + nu.size());
  auto absorb = [&](const ParticleMeasure& m, double sign) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      auto key = atom_key(m.atom(i));
      auto it = net.find(key);
      if (it == net.end()) {
        rep.push_back(m.atom(i));
        net.emplace(std::move(key), std::make_pair(rep.size() - 1, sign * m.weight(i)));
      } else {
        it->second.second += sign * m.weight(i);
      }
    }
  };
  absorb(mu, +1.0);
  absorb(nu, -1.0);
  double s = 0.0;
  for (const auto& [key, entry] : net) {
    const auto& [idx, w] = entry;
    s += (1.0 + norm_pow(rep[idx], k.k)) * std::fabs(w);
  }
  return s;
}

ParticleMeasure mix(const ParticleMeasure& mu, const ParticleMeasure& nu, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("mix: eps outside [0,1]");
  if (mu.dim() != nu.dim()) throw std::invalid_argument("mix: dimension mismatch");
  const int d = mu.dim();
  std::vector<double> atoms;
  std::vector<double> weights;
  std::unordered_map<std::string, std::size_t> index;
  auto absorb = [&](const ParticleMeasure& m, double scale) {
    if (scale == 0.0) return;  // atoms with no mass stay out of the support
    for (std::size_t i = 0; i < m.size(); ++i) {
      auto key = atom_key(m.atom(i));
      auto it = index.find(key);
      if (it == index.end()) {
        index.emplace(std::move(key), weights.size());
        const Span a = m.atom(i);
        atoms.insert(atoms.end(), a.begin(), a.end());
        weights.push_back(scale * m.weight(i));
      } else {
        weights[it->second] += scale * m.weight(i);
      }
    }
  };
  absorb(mu, 1.0 - eps);
  absorb(nu, eps);
  // Re-normalize the roundoff in the weight sum to keep the invariant tight.
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (sum > 0.0 && std::fabs(sum - 1.0) <= 1e-9)
    for (double& w : weights) w /= sum;
  return ParticleMeasure(std::move(atoms), d, std::move(weights));
}

std::vector<double> observable_mean(const ParticleMeasure& mu, const ObsFn& h, int obs_dim) {
  std::vector<double> acc(std::size_t(obs_dim), 0.0);
  std::vector<double> buf(std::size_t(obs_dim), 0.0);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    h(mu.atom(i), buf);
    axpy(mu.weight(i), buf, acc);
  }
  return acc;
}

std::vector<double> mean_point(const ParticleMeasure& mu) {
  std::vector<double> acc(std::size_t(mu.dim()), 0.0);
  for (std::size_t i = 0; i < mu.size(); ++i) axpy(mu.weight(i), mu.atom(i), acc);
  return acc;
}

}  // namespace mvsde
