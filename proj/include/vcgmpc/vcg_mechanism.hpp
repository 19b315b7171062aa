#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vcgmpc/efficiency_bounds.hpp"
#include "vcgmpc/lq_solver.hpp"
#include "vcgmpc/mpc_engine.hpp"
#include "vcgmpc/types.hpp"

namespace vcgmpc {

/// Misreport stream failed the envelope or rate-limit admissibility checks.
struct InadmissibleMisreport : InvalidParameter {
  using InvalidParameter::InvalidParameter;
};

/// Quadratic stage cost c^i(x_i, u_i) = x_i' Q_i x_i + u_i' R_i u_i.
template <typename Scalar>
Scalar stage_cost(const VectorX<Scalar>& x_i, const VectorX<Scalar>& u_i,
                  const TypeVector<Scalar>& theta) {
  if (x_i.size() != theta.Q.rows() || u_i.size() != theta.R.rows())
    throw DimensionMismatch("stage_cost: dimensions do not match the type vector");
  return quadratic_form(theta.Q, x_i) + quadratic_form(theta.R, u_i);
}

/// Closed-loop world with one agent absent: its input is pinned to zero and
/// its cost is dropped from the objective, everything else re-optimized.
template <typename Scalar>
struct CounterfactualRun {
  Eigen::Index excluded{0};
  TrajectoryRecord<Scalar> trajectory;   // full-size u with zeros for the absent agent
  VectorX<Scalar> others_costs;          // per step, sum over j != excluded (reported types)
};

namespace detail {

// Input columns belonging to every agent except `excluded`.
inline std::vector<Eigen::Index> kept_input_columns(const Partition& part,
                                                    Eigen::Index excluded) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < part.agents(); ++j) {
    if (j == excluded) continue;
    const Span& u = part.input(j);
    for (Eigen::Index c = 0; c < u.size; ++c) cols.push_back(u.offset + c);
  }
  return cols;
}

template <typename Scalar>
CostWeights<Scalar> reduced_weights(const TypeProfile<Scalar>& profile, const Partition& part,
                                    Eigen::Index excluded,
                                    const std::vector<Eigen::Index>& kept_cols) {
  CostWeights<Scalar> w = assemble_weights(profile, part);
  const Span& s = part.state(excluded);
  w.Q.block(s.offset, s.offset, s.size, s.size).setZero();
  MatrixX<Scalar> R_red(kept_cols.size(), kept_cols.size());
  for (std::size_t a = 0; a < kept_cols.size(); ++a)
    for (std::size_t b = 0; b < kept_cols.size(); ++b)
      R_red(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          w.R(kept_cols[a], kept_cols[b]);
  w.R = std::move(R_red);
  return w;
}

}  // namespace detail

/// Simulate the market with `excluded` absent. The reported profile stream
/// supplies the other agents' types; the excluded entry is ignored.
template <typename Scalar>
CounterfactualRun<Scalar> run_counterfactual(const DiscretePlant<Scalar>& plant,
                                             const VectorX<Scalar>& x0,
                                             const ProfileStream<Scalar>& reported,
                                             Eigen::Index excluded, Eigen::Index T,
                                             Eigen::Index steps,
                                             const MpcOptions<Scalar>& opts = {}) {
  const Partition& part = plant.partition;
  if (excluded < 0 || excluded >= part.agents())
    throw InvalidParameter("counterfactual: agent index out of range");
  if (part.agents() < 2)
    throw InvalidParameter("counterfactual: need at least two agents");

  const std::vector<Eigen::Index> kept = detail::kept_input_columns(part, excluded);
  DiscretePlant<Scalar> reduced = plant;
  reduced.B = MatrixX<Scalar>(plant.B.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) reduced.B.col(static_cast<Eigen::Index>(c)) =
      plant.B.col(kept[c]);

  CounterfactualRun<Scalar> run;
  run.excluded = excluded;
  run.trajectory = detail::make_record(plant, x0, steps);
  run.others_costs = VectorX<Scalar>::Zero(steps);

  const Scalar guard = opts.blowup_factor * std::max<Scalar>(x0.norm(), Scalar(1e-30));
  std::optional<TypeProfile<Scalar>> cached;
  MatrixX<Scalar> gain;
  TrajectoryRecord<Scalar>& traj = run.trajectory;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const TypeProfile<Scalar> profile = reported(t);
    if (!opts.cache_gains || !cached || !(*cached == profile)) {
      const CostWeights<Scalar> w = detail::reduced_weights(profile, part, excluded, kept);
      gain = riccati_finite(reduced, w, T, opts.riccati).gain.back();
      cached = profile;
    }
    const VectorX<Scalar> u_red = -gain * traj.x.col(t);
    for (std::size_t c = 0; c < kept.size(); ++c)
      traj.u(kept[c], t) = u_red(static_cast<Eigen::Index>(c));
    traj.reported.push_back(profile);
    traj.true_types.push_back(profile);
    for (Eigen::Index j = 0; j < part.agents(); ++j) {
      if (j == excluded) continue;
      const auto xj = segment(traj.x.col(t), part.state(j));
      const auto uj = segment(traj.u.col(t), part.input(j));
      traj.stage_costs(j, t) =
          quadratic_form(profile.agent(j).Q, xj) + quadratic_form(profile.agent(j).R, uj);
    }
    run.others_costs(t) = traj.stage_costs.col(t).sum();
    traj.x.col(t + 1) = plant.A * traj.x.col(t) + plant.B * traj.u.col(t);
    if (traj.x.col(t + 1).norm() > guard)
      throw InstabilityError("counterfactual: state escaped the blow-up guard at step " +
                             std::to_string(t));
  }
  return run;
}

/// K_t^i = -(sum of the others' stage costs in the world without agent i).
template <typename Scalar>
Scalar marginal_k(const CounterfactualRun<Scalar>& run, Eigen::Index t) {
  if (t < 0 || t >= run.others_costs.size())
    throw InvalidParameter("marginal_k: step out of range");
  return -run.others_costs(t);
}

namespace detail {

// Sum over j != i of the reported-type stage costs along the main run.
template <typename Scalar>
Scalar others_reported_cost(const TrajectoryRecord<Scalar>& traj, Eigen::Index t,
                            Eigen::Index agent) {
  const Partition& part = traj.partition;
  const TypeProfile<Scalar>& reported = traj.reported.at(static_cast<std::size_t>(t));
  Scalar sum = 0;
  for (Eigen::Index j = 0; j < part.agents(); ++j) {
    if (j == agent) continue;
    const auto xj = segment(traj.x.col(t), part.state(j));
    const auto uj = segment(traj.u.col(t), part.input(j));
    sum += quadratic_form(reported.agent(j).Q, xj) + quadratic_form(reported.agent(j).R, uj);
  }
  return sum;
}

}  // namespace detail

/// Per-step taxes p_t^i = sum_{j != i} c_t^j (reported) + K_t^i, the K terms,
/// and the tax-to-go suffix sums pi_t^i.
template <typename Scalar>
TaxLedger<Scalar> compute_taxes(const TrajectoryRecord<Scalar>& traj,
                                const std::vector<CounterfactualRun<Scalar>>& counterfactuals) {
  const Partition& part = traj.partition;
  const Eigen::Index steps = traj.steps();
  if (static_cast<Eigen::Index>(counterfactuals.size()) != part.agents())
    throw DimensionMismatch("taxes: one counterfactual per agent required");
  TaxLedger<Scalar> ledger;
  ledger.p = MatrixX<Scalar>::Zero(part.agents(), steps);
  ledger.K = MatrixX<Scalar>::Zero(part.agents(), steps);
  ledger.pi = MatrixX<Scalar>::Zero(part.agents(), steps);
  for (Eigen::Index i = 0; i < part.agents(); ++i) {
    const auto& cf = counterfactuals[static_cast<std::size_t>(i)];
    if (cf.excluded != i) throw DimensionMismatch("taxes: counterfactual order mismatch");
    if (cf.others_costs.size() != steps) throw DimensionMismatch("taxes: length mismatch");
    for (Eigen::Index t = 0; t < steps; ++t) {
      ledger.K(i, t) = marginal_k(cf, t);
      ledger.p(i, t) = detail::others_reported_cost(traj, t, i) + ledger.K(i, t);
    }
    Scalar tail = 0;
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      tail += ledger.p(i, t);
      ledger.pi(i, t) = tail;
    }
  }
  return ledger;
}

/// Quasilinear net cost: realized control cost under the true types plus the
/// total tax charged over the run.
template <typename Scalar>
Scalar net_cost(Eigen::Index agent, const TrajectoryRecord<Scalar>& traj,
                const TaxLedger<Scalar>& ledger) {
  if (ledger.p.cols() != traj.steps() || ledger.p.rows() != traj.partition.agents())
    throw DimensionMismatch("net_cost: ledger/trajectory mismatch");
  const AgentCosts<Scalar> costs = evaluate_agent_costs(traj);
  return costs.per_agent(agent) + ledger.pi(agent, 0);
}

/// Everything needed to run the mechanism from one (t, x_t) restart point.
template <typename Scalar>
struct MechanismSetup {
  DiscretePlant<Scalar> plant;
  VectorX<Scalar> x0;
  ProfileStream<Scalar> truth;
  AdmissibilityEnvelope<Scalar> envelope;
  Eigen::Index T{10};
  Eigen::Index steps{600};
  bool taxes{true};
  MpcOptions<Scalar> mpc{};
};

template <typename Scalar>
struct GapResult {
  Scalar gap{0};        // net(truth) - net(misreport); positive = profitable deviation
  Scalar net_truth{0};
  Scalar net_misreport{0};
  Scalar own_cost_truth{0};
  Scalar own_cost_misreport{0};
  Scalar tax_truth{0};
  Scalar tax_misreport{0};
};

namespace detail {

// Shared state for evaluating many deviations of one agent: the truthful
// run, the agent's counterfactual (report-independent), and the truthful
// net cost are computed once.
template <typename Scalar>
class GapEngine {
 public:
  GapEngine(MechanismSetup<Scalar> setup, Eigen::Index agent)
      : setup_(std::move(setup)), agent_(agent) {
    truth_traj_ = run_mpc(setup_.plant, setup_.x0, setup_.truth, setup_.truth, setup_.T,
                          setup_.steps, setup_.mpc);
    if (setup_.taxes)
      counterfactual_ = run_counterfactual(setup_.plant, setup_.x0, setup_.truth, agent_,
                                           setup_.T, setup_.steps, setup_.mpc);
    own_truth_ = evaluate_agent_costs(truth_traj_).per_agent(agent_);
    tax_truth_ = tax_total(truth_traj_);
  }

  GapResult<Scalar> evaluate(
      const std::function<TypeVector<Scalar>(Eigen::Index)>& misreport) const {
    if (auto v = validate_type_stream<Scalar>(misreport, setup_.steps, setup_.envelope))
      throw InadmissibleMisreport("misreport stream inadmissible: " + v->describe());
    const ProfileStream<Scalar> mis_stream =
        override_agent<Scalar>(setup_.truth, agent_, misreport);
    const TrajectoryRecord<Scalar> mis_traj = run_mpc(
        setup_.plant, setup_.x0, mis_stream, setup_.truth, setup_.T, setup_.steps, setup_.mpc);
    GapResult<Scalar> result;
    result.own_cost_truth = own_truth_;
    result.tax_truth = tax_truth_;
    result.net_truth = own_truth_ + tax_truth_;
    result.own_cost_misreport = evaluate_agent_costs(mis_traj).per_agent(agent_);
    result.tax_misreport = tax_total(mis_traj);
    result.net_misreport = result.own_cost_misreport + result.tax_misreport;
    result.gap = result.net_truth - result.net_misreport;
    return result;
  }

  const TrajectoryRecord<Scalar>& truth_trajectory() const { return truth_traj_; }

 private:
  Scalar tax_total(const TrajectoryRecord<Scalar>& traj) const {
    if (!setup_.taxes) return Scalar(0);
    Scalar sum = 0;
    for (Eigen::Index t = 0; t < traj.steps(); ++t)
      sum += others_reported_cost(traj, t, agent_) + marginal_k(*counterfactual_, t);
    return sum;
  }

  MechanismSetup<Scalar> setup_;
  Eigen::Index agent_;
  TrajectoryRecord<Scalar> truth_traj_;
  std::optional<CounterfactualRun<Scalar>> counterfactual_;
  Scalar own_truth_{0};
  Scalar tax_truth_{0};
};

}  // namespace detail

/// Net-cost advantage of a single admissible misreport stream over truthful
/// reporting, all other agents truthful; both worlds start from the setup's
/// (x0, t=0).
template <typename Scalar>
GapResult<Scalar> incentive_gap(const MechanismSetup<Scalar>& setup, Eigen::Index agent,
                                const std::function<TypeVector<Scalar>(Eigen::Index)>& misreport) {
  detail::GapEngine<Scalar> engine(setup, agent);
  return engine.evaluate(misreport);
}

/// Grid of multiplicative perturbations applied to the diagonal of the
/// agent's true weights: Q -> S Q S with S = diag(sqrt(factors)). A
/// non-negative switch_step delays the perturbation until that step
/// (step-function deviation); the default deviates from step 0 on.
template <typename Scalar>
struct MisreportGridSpec {
  std::vector<Scalar> factors{Scalar(0.25), Scalar(0.5), Scalar(1), Scalar(2), Scalar(4)};
  Eigen::Index switch_step{0};
};

template <typename Scalar>
struct MisreportSearchResult {
  GapResult<Scalar> best;
  std::vector<Scalar> best_factors;  // Q diagonal factors then R diagonal factors
  Eigen::Index evaluated{0};
  Eigen::Index skipped_inadmissible{0};
};

namespace detail {

template <typename Scalar>
TypeVector<Scalar> perturb_diag(const TypeVector<Scalar>& tv, const std::vector<Scalar>& factors) {
  const auto nq = tv.Q.rows();
  VectorX<Scalar> sq(nq), sr(tv.R.rows());
  for (Eigen::Index k = 0; k < nq; ++k) sq(k) = std::sqrt(factors[static_cast<std::size_t>(k)]);
  for (Eigen::Index k = 0; k < tv.R.rows(); ++k)
    sr(k) = std::sqrt(factors[static_cast<std::size_t>(nq + k)]);
  TypeVector<Scalar> out = tv;
  out.Q = sq.asDiagonal() * tv.Q * sq.asDiagonal();
  out.R = sr.asDiagonal() * tv.R * sr.asDiagonal();
  return out;
}

}  // namespace detail

/// Exhaustive evaluation of the factor grid; inadmissible points are skipped
/// and counted. Ties resolve to the lowest grid index so results do not
/// depend on the worker count.
template <typename Scalar>
MisreportSearchResult<Scalar> misreport_search(const MechanismSetup<Scalar>& setup,
                                               Eigen::Index agent,
                                               const MisreportGridSpec<Scalar>& grid = {},
                                               unsigned threads = 1) {
  if (grid.factors.empty()) throw InvalidParameter("misreport grid: empty factor list");
  const detail::GapEngine<Scalar> engine(setup, agent);
  const TypeProfile<Scalar> profile0 = setup.truth(0);
  const Eigen::Index n_entries =
      profile0.agent(agent).Q.rows() + profile0.agent(agent).R.rows();
  const std::size_t base = grid.factors.size();
  std::size_t total = 1;
  for (Eigen::Index k = 0; k < n_entries; ++k) total *= base;

  struct Cell {
    bool admissible = false;
    GapResult<Scalar> result{};
    std::vector<Scalar> factors;
  };
  std::vector<Cell> cells(total);

  const auto evaluate_cell = [&](std::size_t idx) {
    std::vector<Scalar> factors(static_cast<std::size_t>(n_entries));
    std::size_t rem = idx;
    for (Eigen::Index k = 0; k < n_entries; ++k) {
      factors[static_cast<std::size_t>(k)] = grid.factors[rem % base];
      rem /= base;
    }
    const auto misreport = [&setup, &factors, agent, sw = grid.switch_step](Eigen::Index t) {
      const TypeVector<Scalar> tv = setup.truth(t).agent(agent);
      return t >= sw ? detail::perturb_diag(tv, factors) : tv;
    };
    Cell cell;
    cell.factors = factors;
    try {
      cell.result = engine.evaluate(misreport);
      cell.admissible = true;
    } catch (const InadmissibleMisreport&) {
      cell.admissible = false;
    }
    cells[idx] = std::move(cell);
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(total)));
  if (workers == 1) {
    for (std::size_t idx = 0; idx < total; ++idx) evaluate_cell(idx);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t idx = next.fetch_add(1); idx < total; idx = next.fetch_add(1))
          evaluate_cell(idx);
      });
    for (auto& th : pool) th.join();
  }

  MisreportSearchResult<Scalar> out;
  bool found = false;
  for (std::size_t idx = 0; idx < total; ++idx) {
    const Cell& cell = cells[idx];
    if (!cell.admissible) {
      ++out.skipped_inadmissible;
      continue;
    }
    ++out.evaluated;
    if (!found || cell.result.gap > out.best.gap) {
      found = true;
      out.best = cell.result;
      out.best_factors = cell.factors;
    }
  }
  if (!found) throw InvalidParameter("misreport grid: every grid point was inadmissible");
  return out;
}

}  // namespace vcgmpc
