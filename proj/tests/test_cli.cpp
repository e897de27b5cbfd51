#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* cli_path() { return MVSDE_CLI_PATH; }

fs::path fresh_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("mvsde_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

json small_ou_config(const fs::path& out, int n_paths = 3000, int n_steps = 100) {
  json j;
  j["model"] = {{"name", "mean-field-ou"}, {"params", {{"a", 0.5}, {"dim", 1}}}};
  j["mu"] = {{"atoms", {{0.0}}}, {"weights", {1.0}}};
  j["nu"] = {{"atoms", {{1.0}}}, {"weights", {1.0}}};
  j["f"] = {{"type", "id"}};
  j["grid"] = {{"T", 1.0}, {"n_steps", n_steps}};
  j["n_paths"] = n_paths;
  j["seed"] = 99;
  j["fd"] = {{"eps", {0.2, 0.1}}};
  j["decay"] = {{"t_list", {0.05, 0.2}}, {"dt_ref", 0.01}};
  j["output_dir"] = out.string();
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config errors exit with code 1 and leave no artifacts") {
  const auto dir = fresh_dir("badcfg");
  const auto cfg = dir / "broken.json";
  write_file(cfg, "{ not json");
  const auto out = dir / "out";
  CHECK(run_cli("estimate-derivative -c " + cfg.string() + " -o " + out.string()) == 1);
  CHECK_FALSE(fs::exists(out / "estimate.json"));

  write_file(cfg, R"({"model": {"name": "no-such-model"}})");
  CHECK(run_cli("estimate-derivative -c " + cfg.string() + " -o " + out.string()) == 1);

  CHECK(run_cli("estimate-derivative -c /nonexistent.json") == 1);
  CHECK(run_cli("estimate-derivative") == 1);  // missing required option
}

TEST_CASE("estimate runs write traceable artifacts") {
  const auto dir = fresh_dir("estimate");
  const auto cfg = dir / "cfg.json";
  const auto out = dir / "out";
  write_file(cfg, small_ou_config(out).dump());
  REQUIRE(run_cli("estimate-derivative -c " + cfg.string()) == 0);

  REQUIRE(fs::exists(out / "estimate.json"));
  REQUIRE(fs::exists(out / "estimate.csv"));
  REQUIRE(fs::exists(out / "config.json"));
  REQUIRE(fs::exists(out / "run_meta.json"));

  const auto est = json::parse(slurp(out / "estimate.json"));
  const auto cfg_echo = json::parse(slurp(out / "config.json"));
  CHECK(est.at("config_hash") == cfg_echo.at("config_hash"));
  CHECK(std::fabs(est.at("value").get<double>() - std::exp(-0.5)) < 0.05);
  // The csv embeds the same hash in its comment line.
  const auto csv = slurp(out / "estimate.csv");
  CHECK(csv.find(est.at("config_hash").get<std::string>()) != std::string::npos);
}

TEST_CASE("outputs are identical across reruns and worker counts") {
  const auto dir = fresh_dir("determinism");
  const auto cfg = dir / "cfg.json";
  write_file(cfg, small_ou_config(dir / "unused").dump());
  const auto out1 = dir / "one";
  const auto out2 = dir / "two";
  REQUIRE(run_cli("estimate-derivative -c " + cfg.string() + " -o " + out1.string() +
                  " --threads 1") == 0);
  REQUIRE(run_cli("estimate-derivative -c " + cfg.string() + " -o " + out2.string() +
                  " --threads 2") == 0);
  CHECK(slurp(out1 / "estimate.json") == slurp(out2 / "estimate.json"));
  CHECK(slurp(out1 / "estimate.csv") == slurp(out2 / "estimate.csv"));
}

TEST_CASE("oracle comparison passes on the linear model") {
  const auto dir = fresh_dir("compare");
  const auto cfg = dir / "cfg.json";
  const auto out = dir / "out";
  write_file(cfg, small_ou_config(out, 4000).dump());
  REQUIRE(run_cli("compare-oracles -c " + cfg.string()) == 0);
  REQUIRE(fs::exists(out / "compare.csv"));
  REQUIRE(fs::exists(out / "compare.md"));
  REQUIRE(fs::exists(out / "fd.json"));
  CHECK(slurp(out / "compare.csv").find("PASS") != std::string::npos);
}

TEST_CASE("flow solves and decay probes write their artifacts") {
  const auto dir = fresh_dir("flowdecay");
  const auto cfg = dir / "cfg.json";
  const auto out = dir / "out";
  auto j = small_ou_config(out, 2000, 50);
  j["flow"] = {{"paths", 2000}};
  write_file(cfg, j.dump());
  REQUIRE(run_cli("solve-flow -c " + cfg.string()) == 0);
  CHECK(fs::exists(out / "flow.csv"));
  const auto side = json::parse(slurp(out / "flow.json"));
  CHECK(side.at("diagnostics").at("converged") == true);

  REQUIRE(run_cli("decay-probe -c " + cfg.string()) == 0);
  CHECK(fs::exists(out / "decay.csv"));
  CHECK(json::parse(slurp(out / "decay.json")).at("pass") == true);
}

TEST_CASE("structural-bound violations exit with code 2") {
  const auto dir = fresh_dir("validate");
  const auto cfg = dir / "cfg.json";
  const auto out = dir / "out";
  auto j = small_ou_config(out);
  j["model"] = {{"name", "quadratic-interaction"}, {"params", json::object()}};
  j["validate"] = {{"measure_center", 100.0}};
  write_file(cfg, j.dump());
  CHECK(run_cli("validate-model -c " + cfg.string()) == 2);
  const auto rep = json::parse(slurp(out / "validation.json"));
  CHECK(rep.at("pass") == false);
  CHECK(rep.at("growth_bound").at("max_ratio").get<double>() > 1.0);

  auto ok = small_ou_config(out);
  write_file(cfg, ok.dump());
  CHECK(run_cli("validate-model -c " + cfg.string()) == 0);
}
