#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "test_helpers.hpp"
#include "vcgmpc/lq_solver.hpp"
#include "vcgmpc/mpc_engine.hpp"

using namespace vcgmpc;
using namespace vcgmpc::testing;

namespace {

DiscretePlant<double> scalar_plant(double a, double b) {
  Eigen::MatrixXd A(1, 1), B(1, 1);
  A << a;
  B << b;
  return {A, B, 1.0, Partition::single(1, 1)};
}

CostWeights<double> scalar_weights(double q, double r) {
  CostWeights<double> w;
  w.Q = Eigen::MatrixXd::Constant(1, 1, q);
  w.R = Eigen::MatrixXd::Constant(1, 1, r);
  return w;
}

}  // namespace

TEST_CASE("one- and two-step scalar recursions") {
  const auto plant = scalar_plant(1.0, 1.0);
  const auto w = scalar_weights(1.0, 1.0);
  const RiccatiLadder<double> ladder = riccati_finite(plant, w, 2);
  REQUIRE(ladder.P.size() == 3);
  REQUIRE(ladder.gain.size() == 2);
  CHECK(ladder.P[0](0, 0) == 0.0);
  CHECK(ladder.P[1](0, 0) == doctest::Approx(1.0));       // P_1 = Q
  CHECK(ladder.P[2](0, 0) == doctest::Approx(1.5));       // 1 - 1/2 + 1
  CHECK(ladder.gain[0](0, 0) == 0.0);                     // P_0 = 0: no terminal pull
  CHECK(ladder.gain[1](0, 0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(riccati_finite(plant, w, 0), InvalidParameter);
}

TEST_CASE("riccati cost equals the dense open-loop oracle on random systems") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> horizon(1, 10);
  std::normal_distribution<double> gauss;
  double worst = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const RandomSystem sys = random_stable_system(rng);
    const Eigen::Index T = horizon(rng);
    Eigen::VectorXd x0(sys.plant.A.rows());
    for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = gauss(rng);
    const double j_riccati =
        quadratic_form(riccati_finite(sys.plant, sys.weights, T).P.back(), x0);
    const double j_oracle = brute_force_open_loop(sys.plant, sys.weights, x0, T).cost;
    worst = std::max(worst, std::abs(j_riccati - j_oracle) / std::max(1e-12, std::abs(j_oracle)));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("deadbeat plant converges to the state weight immediately") {
  const auto plant = scalar_plant(0.0, 1.0);
  const auto w = scalar_weights(3.7, 0.4);
  const DareSolution<double> sol = dare_fixed_point(plant, w);
  CHECK(sol.P(0, 0) == doctest::Approx(3.7));
}

TEST_CASE("scalar dare root is the golden ratio") {
  const auto plant = scalar_plant(1.0, 1.0);
  const auto w = scalar_weights(1.0, 1.0);
  const DareSolution<double> sol = dare_fixed_point(plant, w);
  CHECK(sol.P(0, 0) == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-9));
}

TEST_CASE("two-area dare satisfies its own fixed-point equation") {
  const DiscretePlant<double> plant = discretize(assemble_network(table1_network()), 0.1);
  const CostWeights<double> w = assemble_weights(table1_profile(), plant.partition);
  const DareOptions<double> opts{};
  const DareSolution<double> sol = dare_fixed_point(plant, w, opts);
  // direct substitution into the recursion
  const Eigen::MatrixXd G = plant.B.transpose() * sol.P * plant.B + w.R;
  const Eigen::MatrixXd K = G.llt().solve(plant.B.transpose() * sol.P * plant.A);
  const Eigen::MatrixXd next = plant.A.transpose() * sol.P * (plant.A - plant.B * K) + w.Q;
  CHECK((next - sol.P).lpNorm<Eigen::Infinity>() < opts.tol * 10);
}

TEST_CASE("dare diverges on an unstabilizable pair") {
  const auto plant = scalar_plant(1.5, 0.0);  // no control authority
  const auto w = scalar_weights(1.0, 1.0);
  DareOptions<double> opts;
  opts.max_iterations = 2000;
  CHECK_THROWS_AS(dare_fixed_point(plant, w, opts), NumericError);
}

TEST_CASE("open-loop oracle basics") {
  const auto plant = scalar_plant(1.0, 1.0);
  const auto w = scalar_weights(1.0, 1.0);

  Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  const OpenLoopSolution<double> at_rest = brute_force_open_loop(plant, w, zero, 4);
  CHECK(at_rest.cost == 0.0);
  CHECK(at_rest.u.lpNorm<Eigen::Infinity>() == 0.0);

  Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  const OpenLoopSolution<double> two_step = brute_force_open_loop(plant, w, one, 2);
  CHECK(two_step.cost == doctest::Approx(1.5));  // matches the riccati example
}

TEST_CASE("two-area open-loop impulse cost matches the recursion") {
  const DiscretePlant<double> plant = discretize(assemble_network(table1_network()), 0.1);
  const CostWeights<double> w = assemble_weights(table1_profile(), plant.partition);
  const Eigen::VectorXd x0 = table1_impulse();
  const OpenLoopSolution<double> oracle = brute_force_open_loop(plant, w, x0, 5);
  const double j = quadratic_form(riccati_finite(plant, w, 5).P.back(), x0);
  CHECK(std::abs(j - oracle.cost) / oracle.cost < 1e-8);
}

TEST_CASE("agent cost evaluation") {
  const DiscretePlant<double> plant = discretize(assemble_network(table1_network()), 0.1);
  const TypeProfile<double> profile = table1_profile();

  TrajectoryRecord<double> traj;
  traj.partition = plant.partition;
  traj.dt = plant.dt;
  traj.x = Eigen::MatrixXd::Zero(8, 4);
  traj.u = Eigen::MatrixXd::Zero(2, 3);
  traj.stage_costs = Eigen::MatrixXd::Zero(2, 3);
  for (int t = 0; t < 3; ++t) {
    traj.reported.push_back(profile);
    traj.true_types.push_back(profile);
  }
  const AgentCosts<double> zero = evaluate_agent_costs(traj);
  CHECK(zero.total == 0.0);
  CHECK(zero.per_agent.lpNorm<Eigen::Infinity>() == 0.0);

  traj.x(0, 1) = -0.1;  // omega_1 deviation at one step
  traj.u(1, 2) = 2.0;   // area 2 input at another
  const AgentCosts<double> costs = evaluate_agent_costs(traj);
  CHECK(costs.per_agent(0) == doctest::Approx(10.0 * 0.01));
  CHECK(costs.per_agent(1) == doctest::Approx(0.1 * 4.0));
  CHECK(costs.total == doctest::Approx(costs.per_agent.sum()));

  // partition mismatch
  TrajectoryRecord<double> bad = traj;
  bad.partition = Partition::uniform(2, 3, 1);
  CHECK_THROWS_AS(evaluate_agent_costs(bad), DimensionMismatch);
}

TEST_CASE("horizon monotonicity and symmetry of the value matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const RandomSystem sys = random_stable_system(rng);
    const RiccatiLadder<double> ladder = riccati_finite(sys.plant, sys.weights, 12);
    CHECK(ladder.P.front().lpNorm<Eigen::Infinity>() == 0.0);
    for (std::size_t k = 0; k + 1 < ladder.P.size(); ++k) {
      CHECK((ladder.P[k] - ladder.P[k].transpose()).lpNorm<Eigen::Infinity>() == 0.0);
      CHECK(min_eigenvalue((ladder.P[k + 1] - ladder.P[k]).eval()) >= -1e-9);
    }
  }
}

TEST_CASE("weight monotonicity of the value matrices") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 10; ++trial) {
    const RandomSystem sys = random_stable_system(rng);
    const Eigen::Index n = sys.plant.A.rows();
    const Eigen::Index m = sys.plant.B.cols();
    Eigen::MatrixXd Gq(n, n), Gr(m, m);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) Gq(r, c) = gauss(rng);
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index c = 0; c < m; ++c) Gr(r, c) = gauss(rng);
    CostWeights<double> bigger;
    bigger.Q = sys.weights.Q + Gq.transpose() * Gq;
    bigger.R = sys.weights.R + Gr.transpose() * Gr;
    const Eigen::MatrixXd P_small = riccati_finite(sys.plant, sys.weights, 8).P.back();
    const Eigen::MatrixXd P_big = riccati_finite(sys.plant, bigger, 8).P.back();
    CHECK(min_eigenvalue((P_big - P_small).eval()) >= -1e-9);
  }
}

TEST_CASE("fixed point agrees with a deep finite ladder") {
  std::mt19937_64 rng(13);
  const RandomSystem sys = random_stable_system(rng);
  DareOptions<double> opts;
  opts.tol = 1e-12;
  const DareSolution<double> dare = dare_fixed_point(sys.plant, sys.weights, opts);
  const Eigen::MatrixXd deep = riccati_finite(sys.plant, sys.weights, 2000).P.back();
  CHECK((dare.P - deep).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("riccati is scalar-generic") {
  DiscretePlant<long double> plant;
  plant.A = MatrixX<long double>::Constant(1, 1, 1.0L);
  plant.B = MatrixX<long double>::Constant(1, 1, 1.0L);
  plant.dt = 1.0L;
  plant.partition = Partition::single(1, 1);
  CostWeights<long double> w{MatrixX<long double>::Constant(1, 1, 1.0L),
                             MatrixX<long double>::Constant(1, 1, 1.0L)};
  const auto ladder = riccati_finite(plant, w, 2);
  CHECK(static_cast<double>(ladder.P[2](0, 0)) == doctest::Approx(1.5));
}
