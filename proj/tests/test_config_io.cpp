#include <doctest.h>

#include <sstream>

#include "mvsde/io.hpp"

using namespace mvsde;
using nlohmann::json;

namespace {

json minimal_config() {
  return json::parse(R"({
    "model": {"name": "mean-field-ou", "params": {"a": 0.5, "dim": 1}},
    "mu": {"atoms": [[0.0]], "weights": [1.0]},
    "nu": {"atoms": [[1.0]], "weights": [1.0]},
    "f": {"type": "id"},
    "grid": {"T": 1.0, "n_steps": 100},
    "n_paths": 2000,
    "seed": 7
  })");
}

}  // namespace

TEST_CASE("configs round-trip through their canonical form") {
  const auto cfg = ExperimentConfig::from_json(minimal_config());
  const auto canon = cfg.to_json();
  const auto cfg2 = ExperimentConfig::from_json(canon);
  CHECK(cfg2.to_json().dump() == canon.dump());
  CHECK(cfg2.hash() == cfg.hash());
}

TEST_CASE("the hash tracks content but not location or worker count") {
  auto j = minimal_config();
  const auto base = ExperimentConfig::from_json(j).hash();

  j["output_dir"] = "elsewhere";
  j["threads"] = 7;
  CHECK(ExperimentConfig::from_json(j).hash() == base);

  j["seed"] = 8;
  CHECK(ExperimentConfig::from_json(j).hash() != base);
  j["seed"] = 7;
  j["n_paths"] = 2001;
  CHECK(ExperimentConfig::from_json(j).hash() != base);
}

TEST_CASE("config validation") {
  auto j = minimal_config();
  j["surprise"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  j = minimal_config();
  j["t"] = 0.3333;  // off the grid
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  j = minimal_config();
  j["mu"] = {{"atoms", json::array()}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  j = minimal_config();
  j["fd"] = {{"eps", {0.5, 1.5}}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  j = minimal_config();
  j["f"] = {{"type", "warp"}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  j = minimal_config();
  j["flow"] = {{"method", "magic"}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
}

TEST_CASE("estimates round-trip through json") {
  DerivativeEstimate est;
  est.value = 0.60653;
  est.std_err = 1.2e-3;
  est.term_semigroup = 0.36788;
  est.term_semigroup_se = 2e-4;
  est.term_martingale = 0.23865;
  est.term_martingale_se = 1e-3;
  est.t = 1.0;
  est.n_paths = 100000;
  est.seed = 12345;
  est.config_hash = "abcd";
  est.f_name = "id";
  est.eta_diag.converged = true;
  est.eta_diag.iterations = 4;
  est.flow_diag.converged = true;

  const auto j = estimate_to_json(est);
  const auto back = estimate_from_json(j);
  CHECK(back.value == est.value);
  CHECK(back.term_martingale == est.term_martingale);
  CHECK(back.config_hash == est.config_hash);
  CHECK(estimate_to_json(back).dump() == j.dump());
}

TEST_CASE("oracle comparison pairs by hash") {
  DerivativeEstimate est;
  est.value = 0.6;
  est.std_err = 0.01;
  est.config_hash = "aaaa";
  est.f_name = "id";
  FdResult fd;
  fd.value = 0.6;
  fd.std_err = 0.01;
  fd.config_hash = "aaaa";
  fd.points = {{0.1, 0.61, 0.012}};

  const auto rep = compare_report(est, fd);
  CHECK(rep.z == 0.0);
  CHECK(rep.pass);

  fd.config_hash = "bbbb";
  CHECK_THROWS_AS(compare_report(est, fd), std::invalid_argument);

  fd.config_hash = "aaaa";
  fd.value = 0.7;  // ten combined sigmas away
  CHECK_FALSE(compare_report(est, fd).pass);

  std::ostringstream csv, md;
  write_compare_csv(csv, {rep});
  write_compare_markdown(md, {rep});
  CHECK(csv.str().find("PASS") != std::string::npos);
  CHECK(md.str().find("| id |") != std::string::npos);
}

TEST_CASE("measures round-trip through csv") {
  const auto m = ParticleMeasure({0.5, -1.0, 2.0, 0.25}, 2, {0.25, 0.75});
  std::stringstream ss;
  write_measure_csv(ss, m);
  const auto back = read_measure_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back.dim() == 2);
  CHECK(back.atom(1)[0] == 2.0);
  CHECK(back.weight(1) == 0.75);
}

TEST_CASE("flow artifacts carry their provenance") {
  const ObsFn id = [](Span x, MutSpan out) { std::copy(x.begin(), x.end(), out.begin()); };
  const TimeGrid g{1.0, 2};
  const auto flow = MeasureFlow::from_measures(
      g,
      {ParticleMeasure::dirac({0.0}), ParticleMeasure::dirac({0.5}), ParticleMeasure::dirac({1.0})},
      id, 1, MomentOrder(1.0));
  std::ostringstream os;
  write_flow_csv(os, flow, "cafe", 99);
  const auto text = os.str();
  CHECK(text.find("# config_hash=cafe seed=99") == 0);
  CHECK(text.find("time,atom,x0,weight") != std::string::npos);

  PicardDiag diag;
  diag.converged = true;
  const auto side = flow_sidecar_json(flow, diag, "cafe", 99);
  CHECK(side.at("config_hash") == "cafe");
  CHECK(side.at("diagnostics").at("converged") == true);
}

TEST_CASE("table observables interpolate and clamp") {
  const auto f = observable_from_json(
      json{{"type", "table"}, {"points", {0.0, 1.0, 2.0}}, {"values", {0.0, 1.0, 0.0}}});
  CHECK(f(std::vector<double>{0.5}) == doctest::Approx(0.5));
  CHECK(f(std::vector<double>{1.5}) == doctest::Approx(0.5));
  CHECK(f(std::vector<double>{-3.0}) == 0.0);
  CHECK(f(std::vector<double>{9.0}) == 0.0);
}
