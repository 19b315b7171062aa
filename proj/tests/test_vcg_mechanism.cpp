#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "test_helpers.hpp"
#include "vcgmpc/mpc_engine.hpp"
#include "vcgmpc/vcg_mechanism.hpp"

using namespace vcgmpc;
using namespace vcgmpc::testing;

namespace {

// two-area network with the tie removed: fully decoupled agents
NetworkModel<double> decoupled_network() {
  NetworkModel<double> net = table1_network();
  net.tie_lines.clear();
  return net;
}

MechanismSetup<double> table1_setup(Eigen::Index T, bool taxes) {
  MechanismSetup<double> setup;
  setup.plant = discretize(assemble_network(table1_network()), 0.1);
  setup.x0 = table1_impulse();
  setup.truth = constant_stream(table1_profile());
  setup.envelope = envelope_from_scales(table1_profile(), setup.plant.partition, 0.5, 2.0, 0.5,
                                        2.0, 0.0);
  setup.T = T;
  setup.steps = 600;
  setup.taxes = taxes;
  return setup;
}

TypeVector<double> case2_type() {
  Eigen::Vector4d qd(10.0, 1.0, 1000.0, 10.0);
  Eigen::MatrixXd R(1, 1);
  R << 0.1;
  return make_type_vector<double>(0, qd.asDiagonal(), R);
}

}  // namespace

TEST_CASE("stage cost quadratic form") {
  const TypeVector<double> theta = table1_profile().entries[0];
  CHECK(stage_cost<double>(Eigen::VectorXd(Eigen::VectorXd::Zero(4)), Eigen::VectorXd(Eigen::VectorXd::Zero(1)), theta) == 0.0);

  // unit steam-valve deviation hits the 500 weight
  Eigen::VectorXd e3 = Eigen::VectorXd(Eigen::VectorXd::Zero(4));
  e3(kPv) = 1.0;
  CHECK(stage_cost<double>(e3, Eigen::VectorXd(Eigen::VectorXd::Zero(1)), theta) == doctest::Approx(500.0));

  // quadratic scaling in the input
  Eigen::VectorXd u(1), u2(1);
  u << 0.3;
  u2 << 0.6;
  const double c0 = stage_cost<double>(Eigen::VectorXd(Eigen::VectorXd::Zero(4)), Eigen::VectorXd(Eigen::VectorXd::Zero(1)), theta);
  const double c1 = stage_cost<double>(Eigen::VectorXd(Eigen::VectorXd::Zero(4)), u, theta);
  const double c2 = stage_cost<double>(Eigen::VectorXd(Eigen::VectorXd::Zero(4)), u2, theta);
  CHECK(c2 - c0 == doctest::Approx(4.0 * (c1 - c0)));

  CHECK_THROWS_AS(stage_cost<double>(Eigen::VectorXd(Eigen::VectorXd::Zero(3)), Eigen::VectorXd(Eigen::VectorXd::Zero(1)), theta),
                  DimensionMismatch);
}

TEST_CASE("counterfactual pins the excluded input to zero") {
  const MechanismSetup<double> setup = table1_setup(10, true);
  const CounterfactualRun<double> run =
      run_counterfactual(setup.plant, setup.x0, setup.truth, 0, 10, 120);
  CHECK(run.excluded == 0);
  CHECK(run.trajectory.u.row(0).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(run.trajectory.u.row(1).lpNorm<Eigen::Infinity>() > 0.0);
  // the excluded agent's cost never enters others_costs
  CHECK(run.trajectory.stage_costs.row(0).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("counterfactual at rest is free") {
  const MechanismSetup<double> setup = table1_setup(10, true);
  const CounterfactualRun<double> run =
      run_counterfactual(setup.plant, Eigen::VectorXd(Eigen::VectorXd::Zero(8)), setup.truth, 1, 10, 60);
  CHECK(run.others_costs.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("decoupled areas make exclusion invisible to the others") {
  const DiscretePlant<double> plant = discretize(assemble_network(decoupled_network()), 0.1);
  const TypeProfile<double> truth = table1_profile();
  const Eigen::VectorXd x0 = table1_impulse();

  const TrajectoryRecord<double> full =
      run_mpc(plant, x0, constant_stream(truth), constant_stream(truth), 10, 200);
  const CounterfactualRun<double> without_0 =
      run_counterfactual(plant, x0, constant_stream(truth), 0, 10, 200);

  // agent 2's trajectory slice is identical with or without agent 1
  const auto s2 = plant.partition.state(1);
  CHECK((full.x.block(s2.offset, 0, s2.size, 201) -
         without_0.trajectory.x.block(s2.offset, 0, s2.size, 201))
            .lpNorm<Eigen::Infinity>() < 1e-12);
  for (Eigen::Index t = 0; t < 200; ++t)
    CHECK(without_0.others_costs(t) == doctest::Approx(full.stage_costs(1, t)).epsilon(1e-12));
}

TEST_CASE("reduced-B and selection-embedding counterfactuals agree") {
  const MechanismSetup<double> setup = table1_setup(8, true);
  const Eigen::Index excluded = 0;
  const CounterfactualRun<double> primary =
      run_counterfactual(setup.plant, setup.x0, setup.truth, excluded, 8, 150);

  // independent construction: embed the survivors through a selection matrix
  const DiscretePlant<double>& plant = setup.plant;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2, 1);
  S(1, 0) = 1.0;  // only agent 2's input column survives
  DiscretePlant<double> reduced{plant.A, plant.B * S, plant.dt, plant.partition};
  const TypeProfile<double> profile = setup.truth(0);
  CostWeights<double> w = assemble_weights(profile, plant.partition);
  w.Q.block(0, 0, 4, 4).setZero();
  w.R = (S.transpose() * w.R * S).eval();
  const Eigen::MatrixXd gain = riccati_finite(reduced, w, 8).gain.back();

  Eigen::VectorXd x = setup.x0;
  for (Eigen::Index t = 0; t < 150; ++t) {
    const Eigen::VectorXd u_full = S * (-gain * x).eval();
    CHECK((u_full - primary.trajectory.u.col(t)).lpNorm<Eigen::Infinity>() <= 1e-10);
    double others = 0;
    for (Eigen::Index j = 0; j < 2; ++j) {
      if (j == excluded) continue;
      const auto xj = segment(x, plant.partition.state(j));
      const auto uj = segment(u_full, plant.partition.input(j));
      others += quadratic_form(profile.agent(j).Q, xj) + quadratic_form(profile.agent(j).R, uj);
    }
    CHECK(others == doctest::Approx(primary.others_costs(t)).epsilon(1e-10));
    x = plant.A * x + plant.B * u_full;
  }
}

TEST_CASE("marginal contribution constants") {
  const MechanismSetup<double> setup = table1_setup(10, true);
  const CounterfactualRun<double> run =
      run_counterfactual(setup.plant, setup.x0, setup.truth, 0, 10, 100);
  CHECK(marginal_k(run, 7) == doctest::Approx(-run.others_costs(7)));
  CHECK_THROWS_AS(marginal_k(run, 100), InvalidParameter);

  const CounterfactualRun<double> rest =
      run_counterfactual(setup.plant, Eigen::VectorXd(Eigen::VectorXd::Zero(8)), setup.truth, 0, 10, 50);
  for (Eigen::Index t = 0; t < 50; ++t) CHECK(marginal_k(rest, t) == 0.0);
}

TEST_CASE("K does not depend on the excluded agent's reports") {
  const MechanismSetup<double> setup = table1_setup(10, true);
  const CounterfactualRun<double> truthful =
      run_counterfactual(setup.plant, setup.x0, setup.truth, 0, 10, 600);
  const ProfileStream<double> misreported = override_agent<double>(
      setup.truth, 0, [](Eigen::Index) { return case2_type(); });
  const CounterfactualRun<double> lied =
      run_counterfactual(setup.plant, setup.x0, misreported, 0, 10, 600);
  CHECK((truthful.others_costs - lied.others_costs).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("tax ledger identities") {
  const MechanismSetup<double> setup = table1_setup(10, true);
  const TrajectoryRecord<double> traj =
      run_mpc(setup.plant, setup.x0, setup.truth, setup.truth, 10, 200);
  std::vector<CounterfactualRun<double>> cfs;
  for (Eigen::Index i = 0; i < 2; ++i)
    cfs.push_back(run_counterfactual(setup.plant, setup.x0, setup.truth, i, 10, 200));
  const TaxLedger<double> ledger = compute_taxes(traj, cfs);

  // p - K equals the reported stage costs of the other agents
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index t = 0; t < 200; ++t) {
      const Eigen::Index j = 1 - i;
      CHECK(ledger.p(i, t) - ledger.K(i, t) ==
            doctest::Approx(traj.stage_costs(j, t)).epsilon(1e-12));
    }

  // pi is the suffix sum of p
  for (Eigen::Index i = 0; i < 2; ++i) {
    double tail = 0;
    for (Eigen::Index t = 199; t >= 0; --t) {
      tail += ledger.p(i, t);
      CHECK(ledger.pi(i, t) == doctest::Approx(tail));
    }
  }

  // total tax equals realized externality relative to absence
  for (Eigen::Index i = 0; i < 2; ++i) {
    const Eigen::Index j = 1 - i;
    const double others_full = traj.stage_costs.row(j).sum();
    const double others_absent = cfs[static_cast<std::size_t>(i)].others_costs.sum();
    CHECK(ledger.pi(i, 0) == doctest::Approx(others_full - others_absent).epsilon(1e-10));
  }
}

TEST_CASE("taxes vanish at rest and under decoupling") {
  const DiscretePlant<double> plant = discretize(assemble_network(decoupled_network()), 0.1);
  const ProfileStream<double> truth = constant_stream(table1_profile());
  const Eigen::VectorXd x0 = table1_impulse();

  const TrajectoryRecord<double> traj = run_mpc(plant, x0, truth, truth, 10, 150);
  std::vector<CounterfactualRun<double>> cfs;
  for (Eigen::Index i = 0; i < 2; ++i)
    cfs.push_back(run_counterfactual(plant, x0, truth, i, 10, 150));
  const TaxLedger<double> ledger = compute_taxes(traj, cfs);
  CHECK(ledger.p.lpNorm<Eigen::Infinity>() < 1e-12);

  // net cost reduces to the solo optimal cost
  const double net0 = net_cost(0, traj, ledger);
  CHECK(net0 == doctest::Approx(evaluate_agent_costs(traj).per_agent(0)).epsilon(1e-12));

  const TrajectoryRecord<double> rest = run_mpc(plant, Eigen::VectorXd(Eigen::VectorXd::Zero(8)), truth, truth,
                                                10, 50);
  std::vector<CounterfactualRun<double>> rest_cfs;
  for (Eigen::Index i = 0; i < 2; ++i)
    rest_cfs.push_back(run_counterfactual(plant, Eigen::VectorXd(Eigen::VectorXd::Zero(8)), truth, i, 10, 50));
  const TaxLedger<double> zero_ledger = compute_taxes(rest, rest_cfs);
  CHECK(zero_ledger.p.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(net_cost(1, rest, zero_ledger) == 0.0);
}

TEST_CASE("truthful reporting has zero incentive gap") {
  const MechanismSetup<double> setup = table1_setup(10, true);
  const GapResult<double> gap = incentive_gap<double>(
      setup, 0, [&](Eigen::Index t) { return setup.truth(t).agent(0); });
  CHECK(gap.gap == 0.0);
  CHECK(gap.net_truth == gap.net_misreport);
}

TEST_CASE("inadmissible misreports are rejected") {
  const MechanismSetup<double> setup = table1_setup(10, true);
  CHECK_THROWS_AS(incentive_gap<double>(setup, 0,
                                        [&](Eigen::Index) {
                                          TypeVector<double> tv = setup.truth(0).agent(0);
                                          tv.Q *= 100.0;  // far above the envelope
                                          return tv;
                                        }),
                  InadmissibleMisreport);
}

TEST_CASE("the case-study misreport is profitable without taxes at short horizons") {
  const MechanismSetup<double> setup = table1_setup(5, false);
  const GapResult<double> gap =
      incentive_gap<double>(setup, 0, [](Eigen::Index) { return case2_type(); });
  CHECK(gap.gap > 0.0);
  CHECK(gap.own_cost_misreport < gap.own_cost_truth);
}

TEST_CASE("grid search over the identity factor finds nothing") {
  const MechanismSetup<double> setup = table1_setup(10, true);
  MisreportGridSpec<double> grid;
  grid.factors = {1.0};
  const MisreportSearchResult<double> result = misreport_search(setup, 0, grid);
  CHECK(result.best.gap == 0.0);
  CHECK(result.evaluated == 1);
  CHECK(result.skipped_inadmissible == 0);
}

TEST_CASE("grid search skips inadmissible factors and reproduces the deviation") {
  const MechanismSetup<double> setup = table1_setup(5, false);
  MisreportGridSpec<double> grid;  // default 5 factors, 0.25 and 4 are outside [0.5, 2]
  const MisreportSearchResult<double> result = misreport_search(setup, 0, grid, 2);
  CHECK(result.evaluated == 243);              // 3^5 admissible combinations
  CHECK(result.skipped_inadmissible == 2882);  // 5^5 - 3^5
  CHECK(result.best.gap > 0.0);
}

TEST_CASE("with taxes the gap respects the certificate bound on a fast system") {
  const DiscretePlant<double> plant = fast_two_agent_plant();
  const TypeProfile<double> truth = fast_two_agent_profile();
  const AdmissibilityEnvelope<double> env =
      envelope_from_scales(truth, plant.partition, 0.5, 2.0, 0.5, 2.0, 0.0);
  const EfficiencyCertificate<double> cert = make_certificate(plant, env, 8);
  REQUIRE(cert.valid);
  const DareSolution<double> dare = dare_fixed_point(plant, assemble_weights(truth, plant.partition));

  Eigen::VectorXd x0(2);
  x0 << 1.0, -0.5;
  MechanismSetup<double> setup{plant, x0, constant_stream(truth), env, 8, 200, true};

  // restart points along the truthful trajectory
  const TrajectoryRecord<double> truthful =
      run_mpc(plant, x0, constant_stream(truth), constant_stream(truth), 8, 200);
  MisreportGridSpec<double> grid;
  grid.factors = {0.5, 1.0, 2.0};
  for (const Eigen::Index t : {Eigen::Index(0), Eigen::Index(5), Eigen::Index(20)}) {
    MechanismSetup<double> restarted = setup;
    restarted.x0 = truthful.x.col(t);
    const double bound = *cert.eps * quadratic_form(dare.P, restarted.x0);
    for (Eigen::Index agent = 0; agent < 2; ++agent) {
      const MisreportSearchResult<double> result = misreport_search(restarted, agent, grid, 2);
      CHECK(result.best.gap <= bound + 1e-6);
    }
  }
}

TEST_CASE("step-function deviations switch mid-run") {
  const MechanismSetup<double> setup = table1_setup(5, false);
  MisreportGridSpec<double> grid;
  grid.factors = {1.0, 2.0};
  grid.switch_step = 300;
  const MisreportSearchResult<double> result = misreport_search(setup, 0, grid);
  CHECK(result.evaluated + result.skipped_inadmissible == 32);
  // deviating only for the tail of the run is worth less than deviating from
  // the start
  MisreportGridSpec<double> from_start = grid;
  from_start.switch_step = 0;
  const MisreportSearchResult<double> full = misreport_search(setup, 0, from_start);
  CHECK(result.best.gap <= full.best.gap + 1e-9);
}
