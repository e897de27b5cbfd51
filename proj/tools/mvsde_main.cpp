// Configuration-driven front end: flow solves, derivative estimates, oracle
// comparisons, model validation and small-time probes, each writing
// deterministic artifacts (timestamps live only in run_meta.json).
//
// Exit codes: 0 success, 1 config error, 2 validation failure,
// 3 non-convergence.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mvsde/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNonConvergence = 3;

struct RunContext {
  mvsde::ExperimentConfig cfg;
  fs::path out;
  std::string hash;
  std::chrono::steady_clock::time_point started;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

RunContext prepare(const std::string& config_path, const std::string& out_override, int threads) {
  RunContext ctx;
  ctx.cfg = mvsde::ExperimentConfig::load_file(config_path);
  if (threads > 0) ctx.cfg.threads = threads;
  if (!out_override.empty()) ctx.cfg.output_dir = out_override;
  ctx.hash = ctx.cfg.hash();
  ctx.out = fs::path(ctx.cfg.output_dir);
  fs::create_directories(ctx.out);
  json echoed = ctx.cfg.to_json();
  echoed["config_hash"] = ctx.hash;
  write_json(ctx.out / "config.json", echoed);
  ctx.started = std::chrono::steady_clock::now();
  return ctx;
}

void write_meta(const RunContext& ctx, const std::string& subcommand) {
  const auto elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.started).count();
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  write_json(ctx.out / "run_meta.json", {{"subcommand", subcommand},
                                         {"config_hash", ctx.hash},
                                         {"timestamp", stamp},
                                         {"elapsed_seconds", elapsed},
                                         {"threads", ctx.cfg.threads}});
}

int run_solve_flow(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto model = cfg.build_model();
  const std::int64_t paths = cfg.flow_paths > 0 ? cfg.flow_paths : cfg.n_paths;

  mvsde::MeasureFlow flow;
  mvsde::PicardDiag diag;
  if (cfg.flow_method == "particle") {
    mvsde::ParticleOptions popts;
    popts.threads = cfg.threads;
    flow = mvsde::particle_flow(model, cfg.mu, cfg.grid, paths, cfg.seed, popts);
    diag.converged = true;
    diag.iterations = 1;
  } else {
    auto res = mvsde::picard_flow(model, cfg.mu, cfg.grid, paths, cfg.seed, cfg.picard_options());
    flow = std::move(res.flow);
    diag = std::move(res.diag);
  }

  std::ofstream csv(ctx.out / "flow.csv", std::ios::binary);
  mvsde::write_flow_csv(csv, flow, ctx.hash, cfg.seed);
  write_json(ctx.out / "flow.json", mvsde::flow_sidecar_json(flow, diag, ctx.hash, cfg.seed));
  if (!diag.converged) {
    std::cerr << "solve-flow: no convergence after " << diag.iterations << " iterations\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

int run_estimate(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto model = cfg.build_model();
  const auto f = cfg.build_observable();
  auto est = mvsde::extrinsic_derivative(model, cfg.mu, cfg.nu, f, cfg.t_eval, cfg.grid,
                                         cfg.n_paths, cfg.seed, cfg.estimator_options());
  est.config_hash = ctx.hash;
  write_json(ctx.out / "estimate.json", mvsde::estimate_to_json(est));
  std::ofstream csv(ctx.out / "estimate.csv", std::ios::binary);
  mvsde::write_estimate_csv(csv, est);
  std::cout << "value " << est.value << "  std_err " << est.std_err << "\n";
  return kExitOk;
}

int run_compare(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto model = cfg.build_model();
  const auto f = cfg.build_observable();
  auto est = mvsde::extrinsic_derivative(model, cfg.mu, cfg.nu, f, cfg.t_eval, cfg.grid,
                                         cfg.n_paths, cfg.seed, cfg.estimator_options());
  est.config_hash = ctx.hash;
  auto fd = mvsde::finite_difference_derivative(model, cfg.mu, cfg.nu, f, cfg.t_eval, cfg.fd_eps,
                                                cfg.grid, cfg.n_paths, cfg.seed,
                                                cfg.estimator_options());
  fd.config_hash = ctx.hash;
  const auto report = mvsde::compare_report(est, fd);

  write_json(ctx.out / "estimate.json", mvsde::estimate_to_json(est));
  write_json(ctx.out / "fd.json", mvsde::fd_to_json(fd));
  std::ofstream csv(ctx.out / "compare.csv", std::ios::binary);
  mvsde::write_compare_csv(csv, {report});
  std::ofstream md(ctx.out / "compare.md", std::ios::binary);
  mvsde::write_compare_markdown(md, {report});
  std::cout << "bismut " << report.bismut_value << " +- " << report.bismut_se << ", fd "
            << report.fd_value << " +- " << report.fd_se << ", z " << report.z << " => "
            << (report.pass ? "PASS" : "FAIL") << "\n";
  return report.pass ? kExitOk : kExitValidation;
}

int run_validate(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto model = cfg.build_model();
  mvsde::H2ProbeSpec spec = cfg.probe;
  spec.t_max = cfg.grid.horizon;
  const auto rep = mvsde::validate_h2(model, spec);
  write_json(ctx.out / "validation.json", mvsde::validation_to_json(rep, ctx.hash, cfg.seed));
  if (!rep.pass()) {
    std::cerr << "validate-model: bound violation (growth ratio " << rep.dc2_max_ratio
              << ", continuity ratio " << rep.dc3_max_ratio << ")\n";
    return kExitValidation;
  }
  std::cout << "validate-model: pass (growth ratio " << rep.dc2_max_ratio << ", continuity ratio "
            << rep.dc3_max_ratio << ")\n";
  return kExitOk;
}

int run_decay(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto model = cfg.build_model();
  const auto f = cfg.build_observable();
  const auto probe =
      mvsde::small_time_decay_probe(model, cfg.mu, cfg.nu, f, cfg.decay_t_list, cfg.decay_dt_ref,
                                    cfg.n_paths, cfg.seed, cfg.estimator_options());
  std::ofstream csv(ctx.out / "decay.csv", std::ios::binary);
  mvsde::write_decay_csv(csv, probe, ctx.hash, cfg.seed);
  write_json(ctx.out / "decay.json", mvsde::decay_to_json(probe, ctx.hash, cfg.seed));
  std::cout << "decay exponent " << probe.exponent << (probe.all_zero ? " (all zero)" : "")
            << " => " << (probe.pass ? "PASS" : "FAIL") << "\n";
  return probe.pass ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distribution-dependent SDE simulation and semigroup derivative estimation"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  int threads = 0;
  for (const char* name : {"solve-flow", "estimate-derivative", "compare-oracles",
                           "validate-model", "decay-probe"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "configuration file")->required();
    sub->add_option("-o,--output", out_override, "output directory override");
    sub->add_option("--threads", threads, "worker threads (does not affect results)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // Usage problems are configuration errors; --help and friends exit clean.
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  RunContext ctx;
  try {
    ctx = prepare(config_path, out_override, threads);
  } catch (const mvsde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  int code = kExitOk;
  try {
    if (sub == "solve-flow") code = run_solve_flow(ctx);
    else if (sub == "estimate-derivative") code = run_estimate(ctx);
    else if (sub == "compare-oracles") code = run_compare(ctx);
    else if (sub == "validate-model") code = run_validate(ctx);
    else if (sub == "decay-probe") code = run_decay(ctx);
  } catch (const mvsde::NonConvergenceError& e) {
    std::cerr << e.what() << "\n";
    code = kExitNonConvergence;
  } catch (const mvsde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    code = kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = kExitConfig;
  }
  try {
    write_meta(ctx, sub);
  } catch (const std::exception& e) {
    std::cerr << "warning: " << e.what() << "\n";
  }
  return code;
}
