#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "vcgmpc/harness.hpp"

namespace {

using namespace vcgmpc;

// exit codes: 0 success, 2 config error, 3 numerical failure, 4 no valid
// certificate where one was required
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericError = 3;
constexpr int kNoCertificate = 4;

struct CommonArgs {
  std::string config;
  std::string out = "out";
  std::string horizon;  // integer or "infinite"
  long steps = -1;
  bool no_tax = false;
  long agent = 1;  // 1-based, as in the config and CSV naming
  long seed = -1;
};

Scenario load_with_overrides(const CommonArgs& args) {
  Scenario sc = load_scenario(args.config);
  if (!args.horizon.empty()) {
    if (args.horizon == "infinite")
      sc.horizon = kInfiniteHorizon;
    else {
      try {
        sc.horizon = std::stol(args.horizon);
      } catch (const std::exception&) {
        throw ConfigError("--horizon: expected an integer or 'infinite'");
      }
      if (sc.horizon < 1) throw ConfigError("--horizon: must be >= 1 or 'infinite'");
    }
  }
  if (args.steps > 0) sc.sim_steps = args.steps;
  if (args.no_tax) sc.tax_mode = false;
  if (args.seed >= 0) sc.seed = static_cast<std::uint64_t>(args.seed);
  return sc;
}

void print_run_summary(const RunReport& report, std::ostream& out) {
  out << "steps: " << report.trajectory.steps() << ", dt: " << report.trajectory.dt << " s\n";
  for (Eigen::Index i = 0; i < report.costs.per_agent.size(); ++i)
    out << "  J" << i + 1 << " = " << csv_number(report.costs.per_agent(i)) << "\n";
  out << "  total = " << csv_number(report.costs.total)
      << "  (truncation tail bound " << csv_number(report.tail_bound) << ")\n";
  if (report.net_costs) {
    for (Eigen::Index i = 0; i < report.net_costs->size(); ++i)
      out << "  net cost " << i + 1 << " = " << csv_number((*report.net_costs)(i))
          << "  (taxes " << csv_number((*report.net_costs)(i)-report.costs.per_agent(i))
          << ")\n";
  }
  if (report.certificate) {
    const auto& c = *report.certificate;
    out << "  certificate T=" << c.T << ": alpha=" << csv_number(c.alpha)
        << " rho=" << csv_number(c.rho) << " gamma=" << csv_number(c.gamma);
    if (c.valid)
      out << " eps=" << csv_number(*c.eps) << "\n";
    else
      out << " (gamma >= 1: no suboptimality certificate at this horizon)\n";
  }
  out << "  wall time " << csv_number(report.wall_seconds) << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MPC-based load frequency control with a VCG-like online mechanism"};
  app.require_subcommand(1);

  CommonArgs args;
  std::vector<long> bound_horizons{10, 20, 50};

  const auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", args.config, "scenario config file");
    if (needs_config) opt->required();
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--horizon", args.horizon, "override MPC horizon (integer or 'infinite')");
    cmd->add_option("--steps", args.steps, "override simulation length");
    cmd->add_flag("--no-tax", args.no_tax, "disable the tax scheme");
    cmd->add_option("--agent", args.agent, "1-based agent index");
    cmd->add_option("--seed", args.seed, "seed recorded in run metadata");
  };

  auto* simulate = app.add_subcommand("simulate", "closed-loop run, no taxes");
  add_common(simulate, true);
  auto* mechanism = app.add_subcommand("mechanism", "run with taxes and net costs");
  add_common(mechanism, true);
  auto* bounds = app.add_subcommand("bounds", "certificate table over horizons");
  add_common(bounds, true);
  bounds->add_option("--horizons", bound_horizons, "horizons for the certificate table");
  auto* misreport = app.add_subcommand("misreport", "adversarial misreport grid search");
  add_common(misreport, true);
  auto* repro = app.add_subcommand("repro-tables", "case study reproduction tables");
  add_common(repro, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (simulate->parsed()) {
      const RunReport report = cmd_simulate(load_with_overrides(args));
      emit_artifacts(report, args.out);
      print_run_summary(report, std::cout);
      std::cout << "artifacts written to " << args.out << "\n";
    } else if (mechanism->parsed()) {
      Scenario sc = load_with_overrides(args);
      sc.tax_mode = !args.no_tax;
      const RunReport report = cmd_mechanism(sc);
      emit_artifacts(report, args.out);
      print_run_summary(report, std::cout);
      std::cout << "artifacts written to " << args.out << "\n";
    } else if (bounds->parsed()) {
      const Scenario sc = load_with_overrides(args);
      std::vector<Eigen::Index> horizons(bound_horizons.begin(), bound_horizons.end());
      const std::vector<CertificateRow> rows = cmd_bounds(sc, horizons);
      emit_certificate_csv(rows, args.out);
      bool any_valid = false;
      for (const auto& row : rows) {
        const auto& c = row.certificate;
        std::cout << "T=" << c.T << " alpha=" << csv_number(c.alpha)
                  << " rho=" << csv_number(c.rho) << " gamma=" << csv_number(c.gamma)
                  << " valid=" << c.valid
                  << " eps=" << (c.eps ? csv_number(*c.eps) : std::string("-"))
                  << " mpc_step_ms=" << csv_number(row.mpc_step_ms) << "\n";
        any_valid = any_valid || c.valid;
      }
      std::cout << "certificate.csv written to " << args.out << "\n";
      if (!any_valid) {
        std::cerr << "no requested horizon admits gamma_T < 1\n";
        return kNoCertificate;
      }
    } else if (misreport->parsed()) {
      const Scenario sc = load_with_overrides(args);
      if (args.agent < 1 || static_cast<std::size_t>(args.agent) > sc.network.areas.size())
        throw ConfigError("--agent: out of range");
      const MisreportReport report = cmd_misreport(sc, args.agent - 1);
      const auto print_result = [&](const char* label, const MisreportSearchResult<double>& r) {
        std::cout << label << ": best gap " << csv_number(r.best.gap) << " at factors [";
        for (std::size_t i = 0; i < r.best_factors.size(); ++i)
          std::cout << (i ? " " : "") << csv_number(r.best_factors[i]);
        std::cout << "] (" << r.evaluated << " evaluated, " << r.skipped_inadmissible
                  << " inadmissible)\n";
      };
      print_result("taxes on ", report.with_tax);
      print_result("taxes off", report.without_tax);
      if (report.eps_bound)
        std::cout << "eps_T * J0 = " << csv_number(*report.eps_bound)
                  << (report.with_tax.best.gap <= *report.eps_bound + 1e-6
                          ? " (tax-mode gap within the certificate bound)"
                          : " (BOUND VIOLATED)")
                  << "\n";
      else
        std::cout << "gamma_T >= 1 at T=" << report.certificate.T
                  << ": no certificate bound available at this horizon\n";
    } else if (repro->parsed()) {
      const ReproReport report = cmd_repro_tables();
      print_repro(report, std::cout);
      emit_repro_artifacts(report, args.out);
      std::cout << "artifacts written to " << args.out << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidParameter& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NoCertificateError& e) {
    std::cerr << "certificate error: " << e.what() << "\n";
    return kNoCertificate;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericError;
  }
  return kOk;
}
