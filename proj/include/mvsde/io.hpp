#pragma once

#include <iosfwd>
#include <nlohmann/json_fwd.hpp>
#include <string>

#include "mvsde/config.hpp"

namespace mvsde {

// All artifact writers are deterministic: doubles are printed with
// round-trip precision and nothing volatile (timestamps, host info) enters
// these files. CSV artifacts start with a '# config_hash=... seed=...'
// comment line so every file is traceable to its run.

std::string csv_header_comment(const std::string& config_hash, std::uint64_t seed);

// ParticleMeasure CSV: one atom per row, coordinates then weight.
void write_measure_csv(std::ostream& os, const ParticleMeasure& m);
ParticleMeasure read_measure_csv(std::istream& is);

// MeasureFlow CSV: time, atom index, coordinates..., weight.
void write_flow_csv(std::ostream& os, const MeasureFlow& flow, const std::string& config_hash,
                    std::uint64_t seed);
nlohmann::json flow_sidecar_json(const MeasureFlow& flow, const PicardDiag& diag,
                                 const std::string& config_hash, std::uint64_t seed);

// PathEnsemble CSV dump: path, step, components...; the sidecar carries the
// seed and grid needed to regenerate the increments.
void write_ensemble_csv(std::ostream& os, const PathEnsemble& ens, const std::string& config_hash);
nlohmann::json ensemble_sidecar_json(const PathEnsemble& ens, const std::string& config_hash);

nlohmann::json estimate_to_json(const DerivativeEstimate& est);
DerivativeEstimate estimate_from_json(const nlohmann::json& j);
void write_estimate_csv(std::ostream& os, const DerivativeEstimate& est);

nlohmann::json fd_to_json(const FdResult& fd);
FdResult fd_from_json(const nlohmann::json& j);

// Per-time weight summary: t, sup|eta|, c components, mean/stderr of M.
void write_eta_summary_csv(std::ostream& os, const EtaProcess& eta, const std::string& config_hash,
                           std::uint64_t seed);

struct CompareReport {
  double bismut_value = 0.0, bismut_se = 0.0;
  double fd_value = 0.0, fd_se = 0.0;
  double z = 0.0;
  bool pass = false;
  std::vector<FdPoint> fd_points;
  std::string config_hash;
  std::string f_name;
};

// Pairs the two estimators of the same configuration; refuses mismatched
// config hashes. PASS iff |z| <= 3 with z from the combined standard error.
CompareReport compare_report(const DerivativeEstimate& est, const FdResult& fd);

void write_compare_csv(std::ostream& os, const std::vector<CompareReport>& reports);
void write_compare_markdown(std::ostream& os, const std::vector<CompareReport>& reports);

nlohmann::json validation_to_json(const H2Report& rep, const std::string& config_hash,
                                  std::uint64_t seed);
void write_decay_csv(std::ostream& os, const DecayProbe& probe, const std::string& config_hash,
                     std::uint64_t seed);
nlohmann::json decay_to_json(const DecayProbe& probe, const std::string& config_hash,
                             std::uint64_t seed);

}  // namespace mvsde
