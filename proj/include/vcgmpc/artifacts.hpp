#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vcgmpc/efficiency_bounds.hpp"
#include "vcgmpc/lq_solver.hpp"
#include "vcgmpc/types.hpp"
#include "vcgmpc/vcg_mechanism.hpp"

namespace vcgmpc {

/// One simulated run plus everything derived from it.
struct RunReport {
  TrajectoryRecord<double> trajectory;
  AgentCosts<double> costs;  // realized, under the true types
  std::optional<TaxLedger<double>> ledger;
  std::optional<Eigen::VectorXd> net_costs;  // per agent, when taxes were computed
  std::optional<EfficiencyCertificate<double>> certificate;
  double tail_bound = 0;  // x_end' P_inf x_end under the true weights
  std::uint64_t seed = 0;
  double wall_seconds = 0;  // kept out of the CSV artifacts
};

/// One row of the horizon-sweep certificate table.
struct CertificateRow {
  EfficiencyCertificate<double> certificate;
  double mpc_step_ms = 0;
};

/// Fixed 12-significant-digit float formatting used by every CSV.
std::string csv_number(double v);

/// Write trajectory.csv / costs.csv (and taxes.csv when a ledger is present)
/// plus the per-quantity SVG line plots into out_dir. Creates the directory.
void emit_artifacts(const RunReport& report, const std::filesystem::path& out_dir);

/// Write certificate.csv (one row per horizon).
void emit_certificate_csv(const std::vector<CertificateRow>& rows,
                          const std::filesystem::path& out_dir);

}  // namespace vcgmpc
