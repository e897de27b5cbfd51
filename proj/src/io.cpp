#include "mvsde/io.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

namespace mvsde {

using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string csv_header_comment(const std::string& config_hash, std::uint64_t seed) {
  return "# config_hash=" + (config_hash.empty() ? std::string("none") : config_hash) +
         " seed=" + std::to_string(seed) + "\n";
}

void write_measure_csv(std::ostream& os, const ParticleMeasure& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Span a = m.atom(i);
    for (double c : a) os << num(c) << ",";
    os << num(m.weight(i)) << "\n";
  }
}

ParticleMeasure read_measure_csv(std::istream& is) {
  std::vector<double> atoms, weights;
  int dim = -1;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() < 2) throw std::runtime_error("measure csv: need coordinates and a weight");
    if (dim < 0) dim = int(row.size()) - 1;
    if (int(row.size()) != dim + 1) throw std::runtime_error("measure csv: ragged rows");
    atoms.insert(atoms.end(), row.begin(), row.end() - 1);
    weights.push_back(row.back());
  }
  return ParticleMeasure(std::move(atoms), dim, std::move(weights));
}

void write_flow_csv(std::ostream& os, const MeasureFlow& flow, const std::string& config_hash,
                    std::uint64_t seed) {
  os << csv_header_comment(config_hash, seed);
  os << "time,atom";
  for (int c = 0; c < flow.measures.front().dim(); ++c) os << ",x" << c;
  os << ",weight\n";
  for (int j = 0; j <= flow.grid.n_steps; ++j) {
    const auto& m = flow.measures[std::size_t(j)];
    const std::string t = num(flow.grid.time(j));
    for (std::size_t i = 0; i < m.size(); ++i) {
      os << t << "," << i;
      for (double c : m.atom(i)) os << "," << num(c);
      os << "," << num(m.weight(i)) << "\n";
    }
  }
}

json flow_sidecar_json(const MeasureFlow& flow, const PicardDiag& diag,
                       const std::string& config_hash, std::uint64_t seed) {
  json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["grid"] = {{"T", flow.grid.horizon}, {"n_steps", flow.grid.n_steps}};
  j["k_order"] = flow.k_order;
  j["k_moments"] = flow.k_moments;
  j["diagnostics"] = {{"converged", diag.converged},
                      {"iterations", diag.iterations},
                      {"distances", diag.distances},
                      {"blowups", diag.blowups},
                      {"h2_warning", diag.h2_warning},
                      {"surrogate_distance", diag.surrogate_distance}};
  return j;
}

void write_ensemble_csv(std::ostream& os, const PathEnsemble& ens, const std::string& config_hash) {
  os << csv_header_comment(config_hash, ens.seed);
  os << "path,step";
  for (int c = 0; c < ens.dim; ++c) os << ",x" << c;
  os << "\n";
  for (std::int64_t p = 0; p < ens.n_paths; ++p)
    for (int j = 0; j <= ens.grid.n_steps; ++j) {
      os << p << "," << j;
      for (double c : ens.state(p, j)) os << "," << num(c);
      os << "\n";
    }
}

json ensemble_sidecar_json(const PathEnsemble& ens, const std::string& config_hash) {
  return {{"config_hash", config_hash},
          {"seed", ens.seed},
          {"grid", {{"T", ens.grid.horizon}, {"n_steps", ens.grid.n_steps}}},
          {"n_paths", ens.n_paths},
          {"dim", ens.dim},
          {"noise_dim", ens.noise_dim},
          {"invalid_paths", ens.n_invalid}};
}

json estimate_to_json(const DerivativeEstimate& est) {
  json j;
  j["value"] = est.value;
  j["std_err"] = est.std_err;
  j["term_semigroup"] = est.term_semigroup;
  j["term_semigroup_se"] = est.term_semigroup_se;
  j["term_martingale"] = est.term_martingale;
  j["term_martingale_se"] = est.term_martingale_se;
  j["t"] = est.t;
  j["n_paths"] = est.n_paths;
  j["seed"] = est.seed;
  j["config_hash"] = est.config_hash;
  j["f"] = est.f_name;
  j["blowups"] = est.blowups;
  j["growth_warning"] = est.growth_warning;
  j["flow"] = {{"converged", est.flow_diag.converged},
               {"iterations", est.flow_diag.iterations},
               {"distances", est.flow_diag.distances}};
  j["eta"] = {{"converged", est.eta_diag.converged},
              {"iterations", est.eta_diag.iterations},
              {"distances", est.eta_diag.distances}};
  return j;
}

DerivativeEstimate estimate_from_json(const json& j) {
  DerivativeEstimate est;
  est.value = j.at("value").get<double>();
  est.std_err = j.at("std_err").get<double>();
  est.term_semigroup = j.at("term_semigroup").get<double>();
  est.term_semigroup_se = j.at("term_semigroup_se").get<double>();
  est.term_martingale = j.at("term_martingale").get<double>();
  est.term_martingale_se = j.at("term_martingale_se").get<double>();
  est.t = j.at("t").get<double>();
  est.n_paths = j.at("n_paths").get<std::int64_t>();
  est.seed = j.at("seed").get<std::uint64_t>();
  est.config_hash = j.value("config_hash", "");
  est.f_name = j.value("f", "");
  est.blowups = j.value("blowups", std::int64_t(0));
  est.growth_warning = j.value("growth_warning", false);
  if (j.contains("flow")) {
    est.flow_diag.converged = j["flow"].value("converged", false);
    est.flow_diag.iterations = j["flow"].value("iterations", 0);
    est.flow_diag.distances = j["flow"].value("distances", std::vector<double>{});
  }
  if (j.contains("eta")) {
    est.eta_diag.converged = j["eta"].value("converged", false);
    est.eta_diag.iterations = j["eta"].value("iterations", 0);
    est.eta_diag.distances = j["eta"].value("distances", std::vector<double>{});
  }
  return est;
}

void write_estimate_csv(std::ostream& os, const DerivativeEstimate& est) {
  os << csv_header_comment(est.config_hash, est.seed);
  os << "value,std_err,term_semigroup,term_semigroup_se,term_martingale,term_martingale_se,"
        "t,n_paths,seed,f,config_hash\n";
  os << num(est.value) << "," << num(est.std_err) << "," << num(est.term_semigroup) << ","
     << num(est.term_semigroup_se) << "," << num(est.term_martingale) << ","
     << num(est.term_martingale_se) << "," << num(est.t) << "," << est.n_paths << "," << est.seed
     << "," << est.f_name << "," << est.config_hash << "\n";
}

json fd_to_json(const FdResult& fd) {
  json pts = json::array();
  for (const auto& p : fd.points)
    pts.push_back({{"eps", p.eps}, {"value", p.value}, {"std_err", p.std_err}});
  return {{"points", pts},
          {"value", fd.value},
          {"std_err", fd.std_err},
          {"t", fd.t},
          {"n_paths", fd.n_paths},
          {"seed", fd.seed},
          {"config_hash", fd.config_hash},
          {"f", fd.f_name}};
}

FdResult fd_from_json(const json& j) {
  FdResult fd;
  for (const auto& p : j.at("points"))
    fd.points.push_back({p.at("eps").get<double>(), p.at("value").get<double>(),
                         p.at("std_err").get<double>()});
  fd.value = j.at("value").get<double>();
  fd.std_err = j.at("std_err").get<double>();
  fd.t = j.at("t").get<double>();
  fd.n_paths = j.at("n_paths").get<std::int64_t>();
  fd.seed = j.at("seed").get<std::uint64_t>();
  fd.config_hash = j.value("config_hash", "");
  fd.f_name = j.value("f", "");
  return fd;
}

void write_eta_summary_csv(std::ostream& os, const EtaProcess& eta, const std::string& config_hash,
                           std::uint64_t seed) {
  os << csv_header_comment(config_hash, seed);
  os << "t,eta_sup";
  for (int c = 0; c < eta.obs_dim; ++c) os << ",c" << c;
  for (int c = 0; c < eta.obs_dim; ++c) os << ",v" << c;
  os << ",M_mean,M_se\n";
  for (int j = 0; j <= eta.grid.n_steps; ++j) {
    os << num(eta.grid.time(j)) << "," << num(eta.eta_sup[std::size_t(j)]);
    for (double c : eta.corr_at(j)) os << "," << num(c);
    for (double v : eta.v_at(j)) os << "," << num(v);
    os << "," << num(eta.m_mean[std::size_t(j)]) << "," << num(eta.m_se[std::size_t(j)]) << "\n";
  }
}

CompareReport compare_report(const DerivativeEstimate& est, const FdResult& fd) {
  if (!est.config_hash.empty() && !fd.config_hash.empty() && est.config_hash != fd.config_hash)
    throw std::invalid_argument("compare_report: config hash mismatch");
  CompareReport r;
  r.bismut_value = est.value;
  r.bismut_se = est.std_err;
  r.fd_value = fd.value;
  r.fd_se = fd.std_err;
  const double se = std::sqrt(est.std_err * est.std_err + fd.std_err * fd.std_err);
  r.z = se > 0.0 ? (est.value - fd.value) / se
                 : (est.value == fd.value ? 0.0 : std::numeric_limits<double>::infinity());
  r.pass = std::fabs(r.z) <= 3.0;
  r.fd_points = fd.points;
  r.config_hash = est.config_hash.empty() ? fd.config_hash : est.config_hash;
  r.f_name = est.f_name;
  return r;
}

void write_compare_csv(std::ostream& os, const std::vector<CompareReport>& reports) {
  if (!reports.empty())
    os << "# config_hash=" << (reports.front().config_hash.empty() ? "none" : reports.front().config_hash)
       << "\n";
  os << "f,estimator,eps,value,std_err,z,verdict\n";
  for (const auto& r : reports) {
    os << r.f_name << ",bismut,," << num(r.bismut_value) << "," << num(r.bismut_se) << ",,\n";
    for (const auto& p : r.fd_points)
      os << r.f_name << ",finite-difference," << num(p.eps) << "," << num(p.value) << ","
         << num(p.std_err) << ",,\n";
    os << r.f_name << ",fd-extrapolated,," << num(r.fd_value) << "," << num(r.fd_se) << ","
       << num(r.z) << "," << (r.pass ? "PASS" : "FAIL") << "\n";
  }
}

void write_compare_markdown(std::ostream& os, const std::vector<CompareReport>& reports) {
  os << "| f | estimator | eps | value | std err | z | verdict |\n";
  os << "|---|-----------|-----|-------|---------|---|---------|\n";
  for (const auto& r : reports) {
    os << "| " << r.f_name << " | bismut | | " << num(r.bismut_value) << " | " << num(r.bismut_se)
       << " | | |\n";
    for (const auto& p : r.fd_points)
      os << "| " << r.f_name << " | finite-difference | " << num(p.eps) << " | " << num(p.value)
         << " | " << num(p.std_err) << " | | |\n";
    os << "| " << r.f_name << " | fd-extrapolated | | " << num(r.fd_value) << " | " << num(r.fd_se)
       << " | " << num(r.z) << " | " << (r.pass ? "PASS" : "FAIL") << " |\n";
  }
}

json validation_to_json(const H2Report& rep, const std::string& config_hash, std::uint64_t seed) {
  return {{"config_hash", config_hash},
          {"seed", seed},
          {"n_probes", rep.n_probes},
          {"growth_bound", {{"max_ratio", rep.dc2_max_ratio}, {"worst_t", rep.dc2_worst_t}, {"pass", rep.pass_dc2}}},
          {"continuity_bound", {{"max_ratio", rep.dc3_max_ratio}, {"worst_t", rep.dc3_worst_t}, {"pass", rep.pass_dc3}}},
          {"pass", rep.pass()}};
}

void write_decay_csv(std::ostream& os, const DecayProbe& probe, const std::string& config_hash,
                     std::uint64_t seed) {
  os << csv_header_comment(config_hash, seed);
  os << "t,term_martingale,std_err\n";
  for (const auto& p : probe.points)
    os << num(p.t) << "," << num(p.term_martingale) << "," << num(p.std_err) << "\n";
}

json decay_to_json(const DecayProbe& probe, const std::string& config_hash, std::uint64_t seed) {
  json pts = json::array();
  for (const auto& p : probe.points)
    pts.push_back({{"t", p.t}, {"term_martingale", p.term_martingale}, {"std_err", p.std_err}});
  return {{"config_hash", config_hash},
          {"seed", seed},
          {"points", pts},
          {"exponent", probe.exponent},
          {"all_zero", probe.all_zero},
          {"pass", probe.pass}};
}

}  // namespace mvsde
