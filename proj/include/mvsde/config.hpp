#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "mvsde/bismut.hpp"
#include "mvsde/builtin.hpp"

namespace mvsde {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fully materialized experiment description. Loading overlays the file onto
// the defaults, validates, and keeps the canonical JSON echo so a run is
// self-describing; the canonical form round-trips unchanged and carries the
// config hash embedded into every artifact.
struct ExperimentConfig {
  std::string model_name = "mean-field-ou";
  nlohmann::json model_params = nlohmann::json::object();

  ParticleMeasure mu;
  ParticleMeasure nu;
  nlohmann::json f_spec = {{"type", "id"}};

  TimeGrid grid{1.0, 1000};
  double t_eval = 1.0;
  std::int64_t n_paths = 100000;
  std::uint64_t seed = 12345;
  int threads = 0;  // execution detail; excluded from the hash

  std::string flow_method = "picard";  // or "particle"
  std::int64_t flow_paths = 0;         // 0: n_paths
  int flow_max_iter = 20;
  double flow_tol = 1e-3;
  double flow_lambda = 0.0;  // 0: 10/T

  int eta_max_iter = 30;
  double eta_tol = 1e-4;
  bool eta_store_values = false;

  std::vector<double> fd_eps = {0.1, 0.05, 0.025};

  std::vector<double> decay_t_list = {0.01, 0.04, 0.16};
  double decay_dt_ref = 1e-3;

  H2ProbeSpec probe{};

  std::string output_dir = "out";  // location detail; excluded from the hash

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load_file(const std::string& path);

  nlohmann::json to_json() const;     // canonical, defaults materialized
  std::string hash() const;           // FNV-1a over the canonical form minus
                                      // output_dir/threads
  DriftModel build_model() const;
  Observable build_observable() const;
  EstimatorOptions estimator_options() const;
  PicardOptions picard_options() const;
};

Observable observable_from_json(const nlohmann::json& spec);
ParticleMeasure measure_from_json(const nlohmann::json& spec);
nlohmann::json measure_to_json(const ParticleMeasure& m);

std::uint64_t fnv1a64(std::string_view s);
std::string hash_hex(std::uint64_t h);

}  // namespace mvsde
