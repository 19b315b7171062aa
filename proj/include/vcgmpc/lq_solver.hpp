#pragma once

#include <string>
#include <vector>

#include "vcgmpc/power_model.hpp"
#include "vcgmpc/types.hpp"

namespace vcgmpc {

/// Value matrices P_0..P_T of the finite-horizon recursion
///   P_{k+1} = A'P_k A - A'P_k B (B'P_k B + R)^{-1} B'P_k A + Q,  P_0 = 0,
/// together with the gains gain[k] = (B'P_k B + R)^{-1} B'P_k A. The first
/// input of the (k+1)-step open-loop optimizer is u = -gain[k] x.
template <typename Scalar>
struct RiccatiLadder {
  std::vector<MatrixX<Scalar>> P;     // size T+1
  std::vector<MatrixX<Scalar>> gain;  // size T
};

template <typename Scalar>
struct RiccatiOptions {
  Scalar condition_limit = Scalar(1e13);  // on B'P_k B + R
};

namespace detail {

template <typename Scalar>
void check_weights(const DiscretePlant<Scalar>& plant, const CostWeights<Scalar>& w) {
  const Eigen::Index n = plant.A.rows();
  const Eigen::Index m = plant.B.cols();
  if (plant.A.cols() != n || plant.B.rows() != n)
    throw DimensionMismatch("lq: plant matrices are inconsistent");
  if (w.Q.rows() != n || w.Q.cols() != n || w.R.rows() != m || w.R.cols() != m)
    throw DimensionMismatch("lq: weight dimensions do not match the plant");
}

template <typename Scalar>
MatrixX<Scalar> solve_gain(const DiscretePlant<Scalar>& plant, const MatrixX<Scalar>& P,
                           const MatrixX<Scalar>& R, Scalar condition_limit) {
  const MatrixX<Scalar> G = symmetrized(plant.B.transpose() * P * plant.B + R);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(G, Eigen::EigenvaluesOnly);
  const Scalar lo = es.eigenvalues().minCoeff();
  const Scalar hi = es.eigenvalues().maxCoeff();
  if (!(lo > Scalar(0)) || hi / lo > condition_limit)
    throw NumericError("riccati: B'PB + R ill-conditioned (cond ~ " +
                       std::to_string(static_cast<double>(hi / lo)) + ")");
  return G.llt().solve(plant.B.transpose() * P * plant.A);
}

}  // namespace detail

/// Finite-horizon Riccati recursion; every iterate is re-symmetrized.
/// x' P[T] x is the optimal T-step open-loop cost from x (no terminal cost).
template <typename Scalar>
RiccatiLadder<Scalar> riccati_finite(const DiscretePlant<Scalar>& plant,
                                     const CostWeights<Scalar>& w, Eigen::Index T,
                                     const RiccatiOptions<Scalar>& opts = {}) {
  if (T < 1) throw InvalidParameter("riccati: horizon must be >= 1");
  detail::check_weights(plant, w);
  RiccatiLadder<Scalar> ladder;
  ladder.P.reserve(static_cast<std::size_t>(T) + 1);
  ladder.gain.reserve(static_cast<std::size_t>(T));
  MatrixX<Scalar> P = MatrixX<Scalar>::Zero(plant.A.rows(), plant.A.rows());
  ladder.P.push_back(P);
  for (Eigen::Index k = 0; k < T; ++k) {
    MatrixX<Scalar> K = detail::solve_gain(plant, P, w.R, opts.condition_limit);
    const MatrixX<Scalar> Acl = plant.A - plant.B * K;
    P = symmetrized(plant.A.transpose() * P * Acl + w.Q);
    ladder.gain.push_back(std::move(K));
    ladder.P.push_back(P);
  }
  return ladder;
}

template <typename Scalar>
struct DareOptions {
  Scalar tol = Scalar(1e-10);  // on ||P_{k+1} - P_k||_inf
  Eigen::Index max_iterations = 1000000;
  Scalar condition_limit = Scalar(1e13);
};

template <typename Scalar>
struct DareSolution {
  MatrixX<Scalar> P;
  MatrixX<Scalar> gain;
  Eigen::Index iterations{0};
};

/// Fixed-point iteration of the Riccati recursion from P = 0. Requires a
/// stabilizable pair; divergence or a too-tight tolerance trips the cap.
template <typename Scalar>
DareSolution<Scalar> dare_fixed_point(const DiscretePlant<Scalar>& plant,
                                      const CostWeights<Scalar>& w,
                                      const DareOptions<Scalar>& opts = {}) {
  detail::check_weights(plant, w);
  MatrixX<Scalar> P = MatrixX<Scalar>::Zero(plant.A.rows(), plant.A.rows());
  for (Eigen::Index it = 1; it <= opts.max_iterations; ++it) {
    MatrixX<Scalar> K = detail::solve_gain(plant, P, w.R, opts.condition_limit);
    MatrixX<Scalar> next = symmetrized(plant.A.transpose() * P * (plant.A - plant.B * K) + w.Q);
    const Scalar delta = (next - P).template lpNorm<Eigen::Infinity>();
    P = std::move(next);
    if (delta < opts.tol) {
      MatrixX<Scalar> gain = detail::solve_gain(plant, P, w.R, opts.condition_limit);
      return {std::move(P), std::move(gain), it};
    }
  }
  throw NumericError(
      "dare: no convergence within the iteration cap (non-stabilizable pair or tol too tight)");
}

template <typename Scalar>
struct OpenLoopSolution {
  MatrixX<Scalar> u;  // m x T
  Scalar cost{0};
};

/// Independent open-loop oracle: stacks the T-step cost as one dense
/// quadratic in (u_0..u_{T-1}) via matrix powers and solves the normal
/// equations. Deliberately shares no code with the Riccati path.
template <typename Scalar>
OpenLoopSolution<Scalar> brute_force_open_loop(const DiscretePlant<Scalar>& plant,
                                               const CostWeights<Scalar>& w,
                                               const VectorX<Scalar>& x0, Eigen::Index T) {
  if (T < 1) throw InvalidParameter("open loop: horizon must be >= 1");
  detail::check_weights(plant, w);
  const Eigen::Index n = plant.A.rows();
  const Eigen::Index m = plant.B.cols();
  if (x0.size() != n) throw DimensionMismatch("open loop: x0 size");

  // x_k = A^k x0 + sum_{j<k} A^{k-1-j} B u_j for k = 1..T-1; stage costs use
  // x_0..x_{T-1} and u_0..u_{T-1}.
  std::vector<MatrixX<Scalar>> Apow(static_cast<std::size_t>(T));
  Apow[0] = MatrixX<Scalar>::Identity(n, n);
  for (Eigen::Index k = 1; k < T; ++k) Apow[static_cast<std::size_t>(k)] = Apow[k - 1] * plant.A;

  MatrixX<Scalar> Gamma = MatrixX<Scalar>::Zero(n * (T - 1), m * T);
  MatrixX<Scalar> Phi = MatrixX<Scalar>::Zero(n * (T - 1), n);
  for (Eigen::Index k = 1; k < T; ++k) {
    Phi.block(n * (k - 1), 0, n, n) = Apow[static_cast<std::size_t>(k - 1)] * plant.A;
    for (Eigen::Index j = 0; j < k; ++j)
      Gamma.block(n * (k - 1), m * j, n, m) = Apow[static_cast<std::size_t>(k - 1 - j)] * plant.B;
  }

  MatrixX<Scalar> Qblk = MatrixX<Scalar>::Zero(n * (T - 1), n * (T - 1));
  MatrixX<Scalar> Rblk = MatrixX<Scalar>::Zero(m * T, m * T);
  for (Eigen::Index k = 0; k + 1 < T; ++k) Qblk.block(n * k, n * k, n, n) = w.Q;
  for (Eigen::Index k = 0; k < T; ++k) Rblk.block(m * k, m * k, m, m) = w.R;

  // J(U) = c + 2 g'U + U'HU with H = Gamma'Q Gamma + R, g = Gamma'Q Phi x0.
  const MatrixX<Scalar> H = symmetrized(Gamma.transpose() * Qblk * Gamma + Rblk);
  const VectorX<Scalar> g = Gamma.transpose() * Qblk * (Phi * x0);
  const Scalar c = quadratic_form(w.Q, x0) + quadratic_form(Qblk, (Phi * x0).eval());

  Eigen::LDLT<MatrixX<Scalar>> ldlt(H);
  VectorX<Scalar> u_star = ldlt.solve(-g);
  if (ldlt.info() != Eigen::Success ||
      (H * u_star + g).template lpNorm<Eigen::Infinity>() >
          Scalar(1e-6) * std::max<Scalar>(Scalar(1), g.template lpNorm<Eigen::Infinity>()))
    throw NumericError("open loop: normal matrix is ill-conditioned");

  OpenLoopSolution<Scalar> sol;
  sol.cost = c + 2 * g.dot(u_star) + quadratic_form(H, u_star);
  sol.u = MatrixX<Scalar>::Zero(m, T);
  for (Eigen::Index k = 0; k < T; ++k) sol.u.col(k) = u_star.segment(m * k, m);
  return sol;
}

template <typename Scalar>
struct AgentCosts {
  VectorX<Scalar> per_agent;
  Scalar total{0};
};

/// Per-agent realized cost J^i = sum_t c_t^i(x_t^i, u_t^i) over the recorded
/// window, evaluated under the given (true) type stream.
template <typename Scalar>
AgentCosts<Scalar> evaluate_agent_costs(const TrajectoryRecord<Scalar>& traj,
                                        const ProfileStream<Scalar>& true_types) {
  const Partition& part = traj.partition;
  AgentCosts<Scalar> out;
  out.per_agent = VectorX<Scalar>::Zero(part.agents());
  for (Eigen::Index t = 0; t < traj.steps(); ++t) {
    const TypeProfile<Scalar> profile = true_types(t);
    validate_profile(profile, part);
    for (Eigen::Index i = 0; i < part.agents(); ++i) {
      const auto xi = segment(traj.x.col(t), part.state(i));
      const auto ui = segment(traj.u.col(t), part.input(i));
      out.per_agent(i) +=
          quadratic_form(profile.agent(i).Q, xi) + quadratic_form(profile.agent(i).R, ui);
    }
  }
  out.total = out.per_agent.sum();
  return out;
}

/// Convenience overload using the true profiles stored in the record.
template <typename Scalar>
AgentCosts<Scalar> evaluate_agent_costs(const TrajectoryRecord<Scalar>& traj) {
  return evaluate_agent_costs<Scalar>(traj, [&traj](Eigen::Index t) {
    return traj.true_types.at(static_cast<std::size_t>(t));
  });
}

}  // namespace vcgmpc
