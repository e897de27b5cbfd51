#include "mvsde/config.hpp"

#include <fstream>

namespace mvsde {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

ParticleMeasure measure_from_json(const json& spec) {
  if (!spec.is_object()) throw ConfigError("measure: expected an object");
  if (!spec.contains("atoms")) throw ConfigError("measure: missing 'atoms'");
  const auto& atoms = spec.at("atoms");
  if (!atoms.is_array() || atoms.empty()) throw ConfigError("measure: 'atoms' must be a non-empty array");
  std::vector<double> flat;
  int dim = -1;
  for (const auto& a : atoms) {
    if (!a.is_array() || a.empty()) throw ConfigError("measure: each atom must be a coordinate array");
    if (dim < 0) dim = int(a.size());
    if (int(a.size()) != dim) throw ConfigError("measure: inconsistent atom dimensions");
    for (const auto& c : a) flat.push_back(c.get<double>());
  }
  std::vector<double> weights;
  if (spec.contains("weights")) weights = spec.at("weights").get<std::vector<double>>();
  try {
    return ParticleMeasure(std::move(flat), dim, std::move(weights));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("measure: ") + e.what());
  }
}

json measure_to_json(const ParticleMeasure& m) {
  json atoms = json::array();
  json weights = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Span a = m.atom(i);
    atoms.push_back(std::vector<double>(a.begin(), a.end()));
    weights.push_back(m.weight(i));
  }
  return {{"atoms", atoms}, {"weights", weights}};
}

Observable observable_from_json(const json& spec) {
  if (!spec.is_object() || !spec.contains("type"))
    throw ConfigError("observable: expected an object with a 'type'");
  const std::string type = spec.at("type").get<std::string>();
  try {
    if (type == "id") return obs_identity();
    if (type == "coord") return obs_coordinate(spec.value("index", 0));
    if (type == "square") return obs_square();
    if (type == "power") return obs_power(spec.at("p").get<double>());
    if (type == "tanh") return obs_tanh();
    if (type == "const") return obs_constant(spec.value("value", 1.0));
    if (type == "table")
      return obs_table(spec.at("points").get<std::vector<double>>(),
                       spec.at("values").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("observable: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("observable: ") + e.what());
  }
  throw ConfigError("observable: unknown type '" + type + "'");
}

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + where);
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown_keys(j,
                      {"model", "mu", "nu", "f", "grid", "t", "n_paths", "seed", "threads",
                       "flow", "eta", "fd", "decay", "validate", "output_dir", "config_hash"},
                      "the top level");
  ExperimentConfig c;
  try {
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown_keys(m, {"name", "params"}, "'model'");
      c.model_name = m.value("name", c.model_name);
      if (m.contains("params")) c.model_params = m.at("params");
    }
    if (j.contains("mu")) c.mu = measure_from_json(j.at("mu"));
    else c.mu = ParticleMeasure::dirac({0.0});
    if (j.contains("nu")) c.nu = measure_from_json(j.at("nu"));
    else c.nu = ParticleMeasure::dirac({1.0});
    if (j.contains("f")) c.f_spec = j.at("f");
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      reject_unknown_keys(g, {"T", "n_steps"}, "'grid'");
      c.grid.horizon = g.value("T", c.grid.horizon);
      c.grid.n_steps = g.value("n_steps", c.grid.n_steps);
    }
    c.t_eval = j.value("t", c.grid.horizon);
    c.n_paths = j.value("n_paths", c.n_paths);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", 0);
    if (j.contains("flow")) {
      const auto& fl = j.at("flow");
      reject_unknown_keys(fl, {"method", "paths", "max_iter", "tol", "lambda"}, "'flow'");
      c.flow_method = fl.value("method", c.flow_method);
      c.flow_paths = fl.value("paths", c.flow_paths);
      c.flow_max_iter = fl.value("max_iter", c.flow_max_iter);
      c.flow_tol = fl.value("tol", c.flow_tol);
      c.flow_lambda = fl.value("lambda", c.flow_lambda);
    }
    if (j.contains("eta")) {
      const auto& e = j.at("eta");
      reject_unknown_keys(e, {"max_iter", "tol", "store_values"}, "'eta'");
      c.eta_max_iter = e.value("max_iter", c.eta_max_iter);
      c.eta_tol = e.value("tol", c.eta_tol);
      c.eta_store_values = e.value("store_values", c.eta_store_values);
    }
    if (j.contains("fd")) {
      const auto& f = j.at("fd");
      reject_unknown_keys(f, {"eps"}, "'fd'");
      if (f.contains("eps")) c.fd_eps = f.at("eps").get<std::vector<double>>();
    }
    if (j.contains("decay")) {
      const auto& d = j.at("decay");
      reject_unknown_keys(d, {"t_list", "dt_ref"}, "'decay'");
      if (d.contains("t_list")) c.decay_t_list = d.at("t_list").get<std::vector<double>>();
      c.decay_dt_ref = d.value("dt_ref", c.decay_dt_ref);
    }
    if (j.contains("validate")) {
      const auto& v = j.at("validate");
      reject_unknown_keys(v,
                          {"n_probes", "seed", "t_max", "x_radius", "y_radius", "measure_radius",
                           "measure_center", "max_atoms"},
                          "'validate'");
      c.probe.n_probes = v.value("n_probes", c.probe.n_probes);
      c.probe.seed = v.value("seed", c.probe.seed);
      c.probe.t_max = v.value("t_max", c.probe.t_max);
      c.probe.x_radius = v.value("x_radius", c.probe.x_radius);
      c.probe.y_radius = v.value("y_radius", c.probe.y_radius);
      c.probe.measure_radius = v.value("measure_radius", c.probe.measure_radius);
      c.probe.measure_center = v.value("measure_center", c.probe.measure_center);
      c.probe.max_atoms = v.value("max_atoms", c.probe.max_atoms);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  try {
    c.grid.validate();
    c.grid.index_of(c.t_eval);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.n_paths < 1) throw ConfigError("config: n_paths must be >= 1");
  if (c.flow_method != "picard" && c.flow_method != "particle")
    throw ConfigError("config: flow.method must be 'picard' or 'particle'");
  for (double e : c.fd_eps)
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("config: fd.eps entries must lie in (0,1)");
  observable_from_json(c.f_spec);          // validate early
  const auto model = c.build_model();      // unknown names, bad params
  if (c.mu.dim() != c.nu.dim()) throw ConfigError("config: mu/nu dimension mismatch");
  if (c.mu.dim() != model.dim)
    throw ConfigError("config: measure dimension does not match the model");
  return c;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json j;
  j["model"] = {{"name", model_name}, {"params", model_params}};
  j["mu"] = measure_to_json(mu);
  j["nu"] = measure_to_json(nu);
  j["f"] = f_spec;
  j["grid"] = {{"T", grid.horizon}, {"n_steps", grid.n_steps}};
  j["t"] = t_eval;
  j["n_paths"] = n_paths;
  j["seed"] = seed;
  j["threads"] = threads;
  j["flow"] = {{"method", flow_method},
               {"paths", flow_paths},
               {"max_iter", flow_max_iter},
               {"tol", flow_tol},
               {"lambda", flow_lambda}};
  j["eta"] = {{"max_iter", eta_max_iter}, {"tol", eta_tol}, {"store_values", eta_store_values}};
  j["fd"] = {{"eps", fd_eps}};
  j["decay"] = {{"t_list", decay_t_list}, {"dt_ref", decay_dt_ref}};
  j["validate"] = {{"n_probes", probe.n_probes},
                   {"seed", probe.seed},
                   {"t_max", probe.t_max},
                   {"x_radius", probe.x_radius},
                   {"y_radius", probe.y_radius},
                   {"measure_radius", probe.measure_radius},
                   {"measure_center", probe.measure_center},
                   {"max_atoms", probe.max_atoms}};
  j["output_dir"] = output_dir;
  return j;
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  j.erase("threads");
  return hash_hex(fnv1a64(j.dump()));
}

DriftModel ExperimentConfig::build_model() const {
  try {
    return model_from_config(model_name, model_params);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

Observable ExperimentConfig::build_observable() const { return observable_from_json(f_spec); }

PicardOptions ExperimentConfig::picard_options() const {
  PicardOptions p;
  p.max_iter = flow_max_iter;
  p.tol = flow_tol;
  p.lambda = flow_lambda;
  p.threads = threads;
  H2ProbeSpec spec = probe;
  spec.t_max = grid.horizon;
  p.probe = spec;
  return p;
}

EstimatorOptions ExperimentConfig::estimator_options() const {
  EstimatorOptions o;
  o.flow = picard_options();
  o.eta.max_iter = eta_max_iter;
  o.eta.tol = eta_tol;
  o.eta.store_values = eta_store_values;
  o.eta.threads = threads;
  o.flow_paths = flow_paths;
  o.threads = threads;
  return o;
}

}  // namespace mvsde
