#pragma once

#include <optional>
#include <utility>

#include "vcgmpc/lq_solver.hpp"
#include "vcgmpc/types.hpp"

namespace vcgmpc {

template <typename Scalar>
struct MpcOptions {
  Scalar blowup_factor = Scalar(1e6);  // guard: ||x_t|| <= factor * ||x0||
  bool cache_gains = true;             // reuse the gain while reports repeat
  RiccatiOptions<Scalar> riccati{};
};

/// One receding-horizon step: assemble block-diagonal weights from the
/// reported profile, solve the T-step problem, return its first input.
/// The profile reported now is held fixed over the whole horizon.
template <typename Scalar>
VectorX<Scalar> openloop_step(const DiscretePlant<Scalar>& plant,
                              const TypeProfile<Scalar>& profile, const VectorX<Scalar>& x,
                              Eigen::Index T, const RiccatiOptions<Scalar>& opts = {}) {
  const CostWeights<Scalar> w = assemble_weights(profile, plant.partition);
  const RiccatiLadder<Scalar> ladder = riccati_finite(plant, w, T, opts);
  return -ladder.gain.back() * x;
}

namespace detail {

// Gain cache keyed on the reported profile; hit rate is what makes constant
// report streams cheap.
template <typename Scalar>
class GainCache {
 public:
  const MatrixX<Scalar>& gain(const DiscretePlant<Scalar>& plant,
                              const TypeProfile<Scalar>& profile, Eigen::Index T,
                              const RiccatiOptions<Scalar>& opts, bool enabled) {
    if (!enabled || !profile_ || !(*profile_ == profile)) {
      const CostWeights<Scalar> w = assemble_weights(profile, plant.partition);
      gain_ = riccati_finite(plant, w, T, opts).gain.back();
      profile_ = profile;
    }
    return gain_;
  }

 private:
  std::optional<TypeProfile<Scalar>> profile_;
  MatrixX<Scalar> gain_;
};

template <typename Scalar>
void record_stage(TrajectoryRecord<Scalar>& traj, Eigen::Index t,
                  const TypeProfile<Scalar>& truth) {
  const Partition& part = traj.partition;
  for (Eigen::Index i = 0; i < part.agents(); ++i) {
    const auto xi = segment(traj.x.col(t), part.state(i));
    const auto ui = segment(traj.u.col(t), part.input(i));
    traj.stage_costs(i, t) =
        quadratic_form(truth.agent(i).Q, xi) + quadratic_form(truth.agent(i).R, ui);
  }
}

template <typename Scalar>
TrajectoryRecord<Scalar> make_record(const DiscretePlant<Scalar>& plant,
                                     const VectorX<Scalar>& x0, Eigen::Index steps) {
  if (x0.size() != plant.A.rows()) throw DimensionMismatch("mpc: x0 size");
  if (steps < 1) throw InvalidParameter("mpc: steps must be >= 1");
  TrajectoryRecord<Scalar> traj;
  traj.partition = plant.partition;
  traj.dt = plant.dt;
  traj.x = MatrixX<Scalar>::Zero(plant.A.rows(), steps + 1);
  traj.u = MatrixX<Scalar>::Zero(plant.B.cols(), steps);
  traj.stage_costs = MatrixX<Scalar>::Zero(plant.partition.agents(), steps);
  traj.x.col(0) = x0;
  traj.reported.reserve(static_cast<std::size_t>(steps));
  traj.true_types.reserve(static_cast<std::size_t>(steps));
  return traj;
}

}  // namespace detail

/// Closed-loop receding-horizon run: u_t solves the T-step problem under the
/// reported profile at t, the plant advances one step, repeat. Stage costs
/// are recorded under the true profile stream.
template <typename Scalar>
TrajectoryRecord<Scalar> run_mpc(const DiscretePlant<Scalar>& plant, const VectorX<Scalar>& x0,
                                 const ProfileStream<Scalar>& reported,
                                 const ProfileStream<Scalar>& truth, Eigen::Index T,
                                 Eigen::Index steps, const MpcOptions<Scalar>& opts = {}) {
  TrajectoryRecord<Scalar> traj = detail::make_record(plant, x0, steps);
  const Scalar guard = opts.blowup_factor * std::max<Scalar>(x0.norm(), Scalar(1e-30));
  detail::GainCache<Scalar> cache;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const TypeProfile<Scalar> profile = reported(t);
    const TypeProfile<Scalar> truth_t = truth(t);
    const MatrixX<Scalar>& K = cache.gain(plant, profile, T, opts.riccati, opts.cache_gains);
    traj.u.col(t) = -K * traj.x.col(t);
    traj.reported.push_back(profile);
    traj.true_types.push_back(truth_t);
    detail::record_stage(traj, t, truth_t);
    traj.x.col(t + 1) = plant.A * traj.x.col(t) + plant.B * traj.u.col(t);
    if (traj.x.col(t + 1).norm() > guard)
      throw InstabilityError("mpc: state escaped the blow-up guard at step " + std::to_string(t));
  }
  return traj;
}

/// Closed loop under the stationary infinite-horizon gain computed from the
/// reported profile; stage costs recorded under the true profile.
template <typename Scalar>
TrajectoryRecord<Scalar> run_lqr(const DiscretePlant<Scalar>& plant, const VectorX<Scalar>& x0,
                                 const TypeProfile<Scalar>& reported,
                                 const TypeProfile<Scalar>& truth, Eigen::Index steps,
                                 const DareOptions<Scalar>& dare_opts = {},
                                 Scalar blowup_factor = Scalar(1e6)) {
  TrajectoryRecord<Scalar> traj = detail::make_record(plant, x0, steps);
  const CostWeights<Scalar> w = assemble_weights(reported, plant.partition);
  const DareSolution<Scalar> dare = dare_fixed_point(plant, w, dare_opts);
  const Scalar guard = blowup_factor * std::max<Scalar>(x0.norm(), Scalar(1e-30));
  for (Eigen::Index t = 0; t < steps; ++t) {
    traj.u.col(t) = -dare.gain * traj.x.col(t);
    traj.reported.push_back(reported);
    traj.true_types.push_back(truth);
    detail::record_stage(traj, t, truth);
    traj.x.col(t + 1) = plant.A * traj.x.col(t) + plant.B * traj.u.col(t);
    if (traj.x.col(t + 1).norm() > guard)
      throw InstabilityError("lqr: state escaped the blow-up guard at step " + std::to_string(t));
  }
  return traj;
}

}  // namespace vcgmpc
