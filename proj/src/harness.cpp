#include "vcgmpc/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <thread>

#include "vcgmpc/mpc_engine.hpp"

namespace vcgmpc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double tail_bound(const DiscretePlant<double>& plant, const TypeProfile<double>& truth,
                  const Eigen::VectorXd& x_end) {
  const DareSolution<double> dare = dare_fixed_point(plant, assemble_weights(truth, plant.partition));
  return quadratic_form(dare.P, x_end);
}

}  // namespace

unsigned worker_count() {
  if (const char* env = std::getenv("VCGMPC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 256) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

RunReport cmd_simulate(const Scenario& sc) {
  const auto start = Clock::now();
  const DiscretePlant<double> plant = build_plant(sc);
  const ProfileStream<double> truth = true_stream(sc);

  RunReport report;
  report.seed = sc.seed;
  if (sc.horizon == kInfiniteHorizon) {
    report.trajectory = run_lqr(plant, sc.x0, profile_at(sc, 0), profile_at(sc, 0), sc.sim_steps);
  } else {
    report.trajectory = run_mpc(plant, sc.x0, truth, truth, sc.horizon, sc.sim_steps);
    if (sc.horizon >= 2)
      report.certificate =
          make_certificate(plant, build_envelope(sc, plant.partition), sc.horizon);
  }
  report.costs = evaluate_agent_costs(report.trajectory);
  report.tail_bound = tail_bound(plant, profile_at(sc, sc.sim_steps - 1),
                                 report.trajectory.x.col(sc.sim_steps));
  report.wall_seconds = seconds_since(start);
  return report;
}

RunReport cmd_mechanism(const Scenario& sc) {
  if (sc.horizon == kInfiniteHorizon)
    throw ConfigError("mechanism: requires a finite horizon");
  const auto start = Clock::now();
  const DiscretePlant<double> plant = build_plant(sc);
  const ProfileStream<double> truth = true_stream(sc);

  RunReport report;
  report.seed = sc.seed;
  report.trajectory = run_mpc(plant, sc.x0, truth, truth, sc.horizon, sc.sim_steps);
  report.costs = evaluate_agent_costs(report.trajectory);

  std::vector<CounterfactualRun<double>> counterfactuals;
  counterfactuals.reserve(static_cast<std::size_t>(plant.partition.agents()));
  for (Eigen::Index i = 0; i < plant.partition.agents(); ++i)
    counterfactuals.push_back(run_counterfactual(plant, sc.x0, truth, i, sc.horizon, sc.sim_steps));
  report.ledger = compute_taxes(report.trajectory, counterfactuals);

  Eigen::VectorXd net(plant.partition.agents());
  for (Eigen::Index i = 0; i < plant.partition.agents(); ++i)
    net(i) = net_cost(i, report.trajectory, *report.ledger);
  report.net_costs = net;

  if (sc.horizon >= 2)
    report.certificate = make_certificate(plant, build_envelope(sc, plant.partition), sc.horizon);
  report.tail_bound = tail_bound(plant, profile_at(sc, sc.sim_steps - 1),
                                 report.trajectory.x.col(sc.sim_steps));
  report.wall_seconds = seconds_since(start);
  return report;
}

std::vector<CertificateRow> cmd_bounds(const Scenario& sc,
                                       const std::vector<Eigen::Index>& horizons) {
  const DiscretePlant<double> plant = build_plant(sc);
  const AdmissibilityEnvelope<double> env = build_envelope(sc, plant.partition);
  const TypeProfile<double> profile = profile_at(sc, 0);

  std::vector<CertificateRow> rows(horizons.size());

  // Certificates fan out across workers; results land at their own index.
  const unsigned workers =
      std::max(1u, std::min<unsigned>(worker_count(), static_cast<unsigned>(horizons.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < horizons.size(); i = next.fetch_add(1))
        rows[i].certificate = make_certificate(plant, env, horizons[i]);
    });
  for (auto& th : pool) th.join();

  // Per-step controller cost is timed serially so measurements do not
  // contend with each other.
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    const Eigen::Index T = horizons[i];
    const Eigen::Index timed_steps = std::min<Eigen::Index>(sc.sim_steps, 50);
    Eigen::VectorXd x = sc.x0;
    (void)openloop_step(plant, profile, x, T);  // warm-up
    const auto start = Clock::now();
    for (Eigen::Index t = 0; t < timed_steps; ++t) {
      const Eigen::VectorXd u = openloop_step(plant, profile, x, T);
      x = plant.A * x + plant.B * u;
    }
    rows[i].mpc_step_ms = seconds_since(start) * 1e3 / static_cast<double>(timed_steps);
  }
  return rows;
}

MisreportReport cmd_misreport(const Scenario& sc, Eigen::Index agent,
                              const MisreportGridSpec<double>& grid) {
  if (sc.horizon == kInfiniteHorizon)
    throw ConfigError("misreport: requires a finite horizon");
  MisreportReport report;
  report.agent = agent;

  MechanismSetup<double> setup = mechanism_setup(sc);
  setup.taxes = true;
  report.with_tax = misreport_search(setup, agent, grid, worker_count());
  setup.taxes = false;
  report.without_tax = misreport_search(setup, agent, grid, worker_count());

  report.certificate = make_certificate(setup.plant, setup.envelope, sc.horizon);
  const DareSolution<double> dare =
      dare_fixed_point(setup.plant, assemble_weights(profile_at(sc, 0), setup.plant.partition));
  report.j0 = quadratic_form(dare.P, sc.x0);
  if (report.certificate.valid) report.eps_bound = *report.certificate.eps * report.j0;
  return report;
}

ReproReport cmd_repro_tables() {
  ReproReport report;
  Scenario sc = two_area_table1();

  const auto run_case = [&](const Scenario& scenario, bool euler, Eigen::Index steps,
                            bool misreport) {
    const DiscretePlant<double> plant = build_plant(scenario, euler);
    TypeProfile<double> reported = profile_at(scenario, 0);
    if (misreport) reported.entries[0] = case2_misreport();
    RunReport run;
    run.trajectory = run_lqr(plant, scenario.x0, reported, profile_at(scenario, 0), steps);
    run.costs = evaluate_agent_costs(run.trajectory);
    run.tail_bound = tail_bound(plant, profile_at(scenario, 0), run.trajectory.x.col(steps));
    return run;
  };
  const auto to_case = [](const RunReport& run) {
    return ReproCase{run.costs.per_agent(0), run.costs.per_agent(1), run.costs.total};
  };

  report.run_case1 = run_case(sc, false, sc.sim_steps, false);
  report.run_case2 = run_case(sc, false, sc.sim_steps, true);
  report.case1 = to_case(report.run_case1);
  report.case2 = to_case(report.run_case2);

  for (const char* method : {"zoh", "euler"})
    for (const Eigen::Index steps : {Eigen::Index(300), Eigen::Index(600), Eigen::Index(1200)}) {
      ReproSensitivityRow row;
      row.method = method;
      row.steps = steps;
      const bool euler = row.method == "euler";
      row.case1 = to_case(run_case(sc, euler, steps, false));
      row.case2 = to_case(run_case(sc, euler, steps, true));
      report.sensitivity.push_back(std::move(row));
    }
  return report;
}

void print_repro(const ReproReport& report, std::ostream& out) {
  const auto dev = [](double measured, double reference) {
    return 100.0 * (measured - reference) / reference;
  };
  const auto line = [&](const char* label, const ReproCase& c, const std::array<double, 3>& ref) {
    out << label << "  J1 " << csv_number(c.j1) << " (ref " << ref[0] << ", "
        << csv_number(dev(c.j1, ref[0])) << "%)  J2 " << csv_number(c.j2) << " (ref " << ref[1]
        << ", " << csv_number(dev(c.j2, ref[1])) << "%)  total " << csv_number(c.total)
        << " (ref " << ref[2] << ", " << csv_number(dev(c.total, ref[2])) << "%)\n";
  };
  out << "case study, stationary control law, zoh discretization, 600 steps:\n";
  line("  case 1 (truthful)     ", report.case1, report.reference_case1);
  line("  case 2 (valve weight x2)", report.case2, report.reference_case2);
  out << "  delta J1 = " << csv_number(report.case2.j1 - report.case1.j1)
      << " (misreport pays off for area 1), delta total = "
      << csv_number(report.case2.total - report.case1.total) << " (social cost rises)\n";
  out << "sensitivity (method, steps -> J1/J2/total):\n";
  for (const auto& row : report.sensitivity) {
    out << "  " << row.method << " " << row.steps << "  case1 " << csv_number(row.case1.j1) << "/"
        << csv_number(row.case1.j2) << "/" << csv_number(row.case1.total) << "  case2 "
        << csv_number(row.case2.j1) << "/" << csv_number(row.case2.j2) << "/"
        << csv_number(row.case2.total) << "\n";
  }
}

void emit_repro_artifacts(const ReproReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "repro_tables.csv", std::ios::binary);
    out << "case,J1,J2,total,ref_J1,ref_J2,ref_total\n";
    out << "1," << csv_number(report.case1.j1) << ',' << csv_number(report.case1.j2) << ','
        << csv_number(report.case1.total) << ',' << csv_number(report.reference_case1[0]) << ','
        << csv_number(report.reference_case1[1]) << ',' << csv_number(report.reference_case1[2])
        << "\n";
    out << "2," << csv_number(report.case2.j1) << ',' << csv_number(report.case2.j2) << ','
        << csv_number(report.case2.total) << ',' << csv_number(report.reference_case2[0]) << ','
        << csv_number(report.reference_case2[1]) << ',' << csv_number(report.reference_case2[2])
        << "\n";
  }
  {
    std::ofstream out(out_dir / "repro_sensitivity.csv", std::ios::binary);
    out << "method,steps,case,J1,J2,total\n";
    for (const auto& row : report.sensitivity) {
      out << row.method << ',' << row.steps << ",1," << csv_number(row.case1.j1) << ','
          << csv_number(row.case1.j2) << ',' << csv_number(row.case1.total) << "\n";
      out << row.method << ',' << row.steps << ",2," << csv_number(row.case2.j1) << ','
          << csv_number(row.case2.j2) << ',' << csv_number(row.case2.total) << "\n";
    }
  }
  emit_artifacts(report.run_case1, out_dir / "case1");
  emit_artifacts(report.run_case2, out_dir / "case2");
}

}  // namespace vcgmpc
