#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vcgmpc/artifacts.hpp"
#include "vcgmpc/scenario.hpp"

namespace vcgmpc {

/// Worker count for fan-out commands: VCGMPC_THREADS when set, otherwise the
/// hardware concurrency (at least 1).
unsigned worker_count();

/// Closed-loop run (MPC, or stationary LQR when horizon == kInfiniteHorizon);
/// no taxes.
RunReport cmd_simulate(const Scenario& scenario);

/// Full mechanism run: trajectory, per-agent counterfactuals, tax ledger and
/// quasilinear net costs.
RunReport cmd_mechanism(const Scenario& scenario);

/// Certificate + measured per-step controller cost for each horizon.
std::vector<CertificateRow> cmd_bounds(const Scenario& scenario,
                                       const std::vector<Eigen::Index>& horizons);

struct MisreportReport {
  Eigen::Index agent = 0;
  MisreportSearchResult<double> with_tax;
  MisreportSearchResult<double> without_tax;
  EfficiencyCertificate<double> certificate;
  double j0 = 0;                    // optimal infinite-horizon social cost from x0
  std::optional<double> eps_bound;  // eps_T * j0 when the certificate is valid
};

/// Adversarial grid search for one agent, run in both tax modes.
MisreportReport cmd_misreport(const Scenario& scenario, Eigen::Index agent,
                              const MisreportGridSpec<double>& grid = {});

struct ReproCase {
  double j1 = 0, j2 = 0, total = 0;
};

struct ReproSensitivityRow {
  std::string method;  // "zoh" or "euler"
  Eigen::Index steps = 0;
  ReproCase case1, case2;
};

/// Case study reproduction: truthful reporting vs. the inflated steam-valve
/// weight, under the stationary controller, plus a discretization/length
/// sensitivity sweep.
struct ReproReport {
  ReproCase case1, case2;  // headline: exact ZOH, 600 steps
  std::array<double, 3> reference_case1{24.64, 18.01, 42.65};
  std::array<double, 3> reference_case2{23.83, 19.62, 43.45};
  std::vector<ReproSensitivityRow> sensitivity;
  RunReport run_case1, run_case2;
};

ReproReport cmd_repro_tables();

void print_repro(const ReproReport& report, std::ostream& out);

/// repro_tables.csv + repro_sensitivity.csv + per-case trajectory artifacts.
void emit_repro_artifacts(const ReproReport& report, const std::filesystem::path& out_dir);

}  // namespace vcgmpc
