#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "vcgmpc/lq_solver.hpp"
#include "vcgmpc/mpc_engine.hpp"
#include "vcgmpc/types.hpp"

namespace vcgmpc {

/// A PSD-order pencil degenerated (singular PD-side matrix with no valid
/// range-space restriction).
struct DegeneracyError : NumericError {
  using NumericError::NumericError;
};

/// A sampled state violated the certified sandwich inequality.
struct CertificateFalsified : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A priori bounds Q_lo <= Q_t <= Q_hi, R_lo <= R_t <= R_hi (stacked over
/// agents) and the per-step rate limit delta that reported sequences must
/// satisfy.
template <typename Scalar>
struct AdmissibilityEnvelope {
  MatrixX<Scalar> Q_lo, Q_hi;
  MatrixX<Scalar> R_lo, R_hi;
  Scalar delta{0};
  Partition partition;
};

template <typename Scalar>
void validate(const AdmissibilityEnvelope<Scalar>& env) {
  if (!(env.delta >= Scalar(0) && env.delta < Scalar(1)))
    throw InvalidParameter("envelope: delta must lie in [0, 1)");
  if (!is_positive_definite(env.Q_lo) || !is_positive_definite(env.R_lo))
    throw InvalidParameter("envelope: lower bounds must be PD");
  if (!is_positive_semidefinite((env.Q_hi - env.Q_lo).eval()) ||
      !is_positive_semidefinite((env.R_hi - env.R_lo).eval()))
    throw InvalidParameter("envelope: upper bounds must dominate lower bounds");
}

/// Envelope as multiples of a reference profile's stacked weights.
template <typename Scalar>
AdmissibilityEnvelope<Scalar> envelope_from_scales(const TypeProfile<Scalar>& reference,
                                                   const Partition& partition, Scalar q_lo,
                                                   Scalar q_hi, Scalar r_lo, Scalar r_hi,
                                                   Scalar delta) {
  const CostWeights<Scalar> w = assemble_weights(reference, partition);
  AdmissibilityEnvelope<Scalar> env{q_lo * w.Q, q_hi * w.Q, r_lo * w.R, r_hi * w.R, delta,
                                    partition};
  validate(env);
  return env;
}

/// Which admissibility inequality failed, and by how much (most negative
/// eigenvalue of the slack matrix).
struct TypeViolation {
  enum Side {
    kQBelowLower,
    kQAboveUpper,
    kRBelowLower,
    kRAboveUpper,
    kQRate,
    kRRate,
  };
  Side side;
  Eigen::Index agent;
  double margin;

  std::string describe() const {
    static constexpr const char* names[] = {
        "Q below envelope lower bound", "Q above envelope upper bound",
        "R below envelope lower bound", "R above envelope upper bound",
        "Q rate limit exceeded",        "R rate limit exceeded",
    };
    return names[side] + std::string(" (agent ") + std::to_string(agent) +
           ", margin " + std::to_string(margin) + ")";
  }
};

inline constexpr double kPsdOrderTol = -1e-10;

/// Check Q_lo <= Q <= Q_hi and R_lo <= R <= R_hi on the agent's block via
/// minimum-eigenvalue tests. Returns the first violation found.
template <typename Scalar>
std::optional<TypeViolation> validate_type_bounds(const TypeVector<Scalar>& theta,
                                                  const AdmissibilityEnvelope<Scalar>& env) {
  const Span& s = env.partition.state(theta.agent);
  const Span& u = env.partition.input(theta.agent);
  if (theta.Q.rows() != s.size || theta.R.rows() != u.size)
    throw DimensionMismatch("validate_type_bounds: weight dimensions");
  const auto check = [&](const MatrixX<Scalar>& slack,
                         TypeViolation::Side side) -> std::optional<TypeViolation> {
    const Scalar lo = min_eigenvalue(slack);
    if (static_cast<double>(lo) < kPsdOrderTol)
      return TypeViolation{side, theta.agent, static_cast<double>(lo)};
    return std::nullopt;
  };
  if (auto v = check(theta.Q - block(env.Q_lo, s, s), TypeViolation::kQBelowLower)) return v;
  if (auto v = check(block(env.Q_hi, s, s) - theta.Q, TypeViolation::kQAboveUpper)) return v;
  if (auto v = check(theta.R - block(env.R_lo, u, u), TypeViolation::kRBelowLower)) return v;
  if (auto v = check(block(env.R_hi, u, u) - theta.R, TypeViolation::kRAboveUpper)) return v;
  return std::nullopt;
}

/// Check the slow-variation constraint
///   (1-delta) Q_t <= Q_{t+1} <= (1+delta) Q_t  (and likewise for R).
template <typename Scalar>
std::optional<TypeViolation> validate_type_rate(const TypeVector<Scalar>& theta_t,
                                                const TypeVector<Scalar>& theta_next,
                                                Scalar delta) {
  if (theta_t.agent != theta_next.agent)
    throw DimensionMismatch("validate_type_rate: agents differ");
  if (theta_t.Q.rows() != theta_next.Q.rows() || theta_t.R.rows() != theta_next.R.rows())
    throw DimensionMismatch("validate_type_rate: dimensions differ");
  const auto ok = [&](const MatrixX<Scalar>& slack) {
    return static_cast<double>(min_eigenvalue(slack)) >= kPsdOrderTol;
  };
  const Scalar lo = Scalar(1) - delta;
  const Scalar hi = Scalar(1) + delta;
  if (!ok(theta_next.Q - lo * theta_t.Q) || !ok(hi * theta_t.Q - theta_next.Q))
    return TypeViolation{TypeViolation::kQRate, theta_t.agent, 0};
  if (!ok(theta_next.R - lo * theta_t.R) || !ok(hi * theta_t.R - theta_next.R))
    return TypeViolation{TypeViolation::kRRate, theta_t.agent, 0};
  return std::nullopt;
}

/// Bounds + rate over a whole per-agent report stream. Consecutive repeats
/// of the same type vector are validated once (the rate constraint is
/// trivially satisfied by equality).
template <typename Scalar>
std::optional<TypeViolation> validate_type_stream(
    const std::function<TypeVector<Scalar>(Eigen::Index)>& stream, Eigen::Index steps,
    const AdmissibilityEnvelope<Scalar>& env) {
  TypeVector<Scalar> prev;
  for (Eigen::Index t = 0; t < steps; ++t) {
    TypeVector<Scalar> cur = stream(t);
    if (t > 0 && cur == prev) continue;
    if (auto v = validate_type_bounds(cur, env)) return v;
    if (t > 0) {
      if (auto v = validate_type_rate(prev, cur, env.delta)) return v;
    }
    prev = std::move(cur);
  }
  return std::nullopt;
}

namespace detail {

// Largest lambda of the pencil S v = lambda M v with M PD, reduced to a
// standard symmetric problem by congruence. A singular M is restricted to
// its range space; if S acts on null(M) the pencil has no finite maximum.
template <typename Scalar>
Scalar pencil_max(const MatrixX<Scalar>& S, const MatrixX<Scalar>& M,
                  Scalar rank_tol = Scalar(1e-10)) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> em(symmetrized(M));
  const auto& lam = em.eigenvalues();
  const Scalar lmax = lam.maxCoeff();
  if (!(lmax > Scalar(0))) throw DegeneracyError("pencil: M is zero");
  const Scalar cut = rank_tol * lmax;

  if (lam.minCoeff() > cut) {
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixX<Scalar>> ges(
        symmetrized(S), symmetrized(M), Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    return ges.eigenvalues().maxCoeff();
  }

  // Range-space restriction.
  std::vector<Eigen::Index> keep, drop;
  for (Eigen::Index i = 0; i < lam.size(); ++i) (lam(i) > cut ? keep : drop).push_back(i);
  MatrixX<Scalar> V(M.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) V.col(static_cast<Eigen::Index>(i)) =
      em.eigenvectors().col(keep[i]);
  const Scalar s_scale = std::max<Scalar>(Scalar(1), S.template lpNorm<Eigen::Infinity>());
  for (Eigen::Index i : drop) {
    const VectorX<Scalar> w = em.eigenvectors().col(i);
    if (quadratic_form(S, w) > rank_tol * s_scale)
      throw DegeneracyError("pencil: S acts on the null space of M, no finite bound");
  }
  const MatrixX<Scalar> Sr = V.transpose() * S * V;
  const MatrixX<Scalar> Mr = V.transpose() * M * V;
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixX<Scalar>> ges(
      symmetrized(Sr), symmetrized(Mr), Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  return ges.eigenvalues().maxCoeff();
}

// Smallest lambda of S v = lambda M v with M PD.
template <typename Scalar>
Scalar pencil_min(const MatrixX<Scalar>& S, const MatrixX<Scalar>& M) {
  if (!(min_eigenvalue(M) > Scalar(0)))
    throw DegeneracyError("pencil: M must be PD");
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixX<Scalar>> ges(
      symmetrized(S), symmetrized(M), Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  return ges.eigenvalues().minCoeff();
}

template <typename Scalar>
std::array<CostWeights<Scalar>, 4> envelope_corners(const AdmissibilityEnvelope<Scalar>& env) {
  return {CostWeights<Scalar>{env.Q_lo, env.R_lo}, CostWeights<Scalar>{env.Q_lo, env.R_hi},
          CostWeights<Scalar>{env.Q_hi, env.R_lo}, CostWeights<Scalar>{env.Q_hi, env.R_hi}};
}

}  // namespace detail

/// Smallest alpha with alpha * P_T >= P_{T+1} (PSD order) for the given
/// weight instance; the horizon-monotonicity constant relating the T-step
/// and (T+1)-step open-loop costs.
template <typename Scalar>
Scalar compute_alpha(const DiscretePlant<Scalar>& plant, const CostWeights<Scalar>& w,
                     Eigen::Index T) {
  if (T < 1) throw InvalidParameter("alpha: T must be >= 1");
  const RiccatiLadder<Scalar> ladder = riccati_finite(plant, w, T + 1);
  return detail::pencil_max(ladder.P[static_cast<std::size_t>(T + 1)],
                            ladder.P[static_cast<std::size_t>(T)]);
}

/// Conservative envelope variant: the maximum of compute_alpha over the four
/// corner weight pairs of the admissibility box.
template <typename Scalar>
Scalar compute_alpha_envelope(const DiscretePlant<Scalar>& plant,
                              const AdmissibilityEnvelope<Scalar>& env, Eigen::Index T) {
  Scalar alpha = Scalar(1);
  for (const auto& w : detail::envelope_corners(env))
    alpha = std::max(alpha, compute_alpha(plant, w, T));
  return alpha;
}

/// rho_T = max{rho : rho * Pbar_T <= Q_lo} where Pbar is the Riccati ladder
/// built with the envelope's upper weights (Q_hi, R_hi); equivalently the
/// smallest generalized eigenvalue of Q_lo v = lambda Pbar_T v.
template <typename Scalar>
Scalar compute_rho(const DiscretePlant<Scalar>& plant, const AdmissibilityEnvelope<Scalar>& env,
                   Eigen::Index T) {
  if (T < 1) throw InvalidParameter("rho: T must be >= 1");
  const RiccatiLadder<Scalar> upper =
      riccati_finite(plant, CostWeights<Scalar>{env.Q_hi, env.R_hi}, T);
  return detail::pencil_min(env.Q_lo, upper.P[static_cast<std::size_t>(T)]);
}

/// gamma_T = (1 - rho_T) alpha_T / (1 - delta).
template <typename Scalar>
Scalar compute_gamma(Scalar alpha, Scalar rho, Scalar delta) {
  if (!(delta >= Scalar(0) && delta < Scalar(1)))
    throw InvalidParameter("gamma: delta must lie in [0, 1)");
  return (Scalar(1) - rho) * alpha / (Scalar(1) - delta);
}

/// eps_T from 1 + eps_T = rho_T (1 - delta)^{1-T} / (1 - gamma_T); only
/// defined when gamma_T < 1.
template <typename Scalar>
Scalar compute_eps(Scalar rho, Scalar gamma, Scalar delta, Eigen::Index T) {
  if (!(gamma < Scalar(1)))
    throw NoCertificateError("eps: gamma_T >= 1, the contraction argument gives no certificate");
  using std::pow;
  return rho * pow(Scalar(1) - delta, Scalar(1 - T)) / (Scalar(1) - gamma) - Scalar(1);
}

template <typename Scalar>
struct EfficiencyCertificate {
  Eigen::Index T{0};
  Scalar alpha{0};
  Scalar rho{0};
  Scalar gamma{0};
  bool valid{false};           // gamma < 1
  std::optional<Scalar> eps;   // present only when valid
};

/// Assemble the full certificate for horizon T (T >= 2: alpha_T relates the
/// (T-1)- and T-step ladders). The closed-form identity
///   1 + ((alpha+delta-1)/alpha) * gamma/(1-gamma) = rho/(1-gamma)
/// linking the decay and sandwich constants is re-checked numerically; a
/// mismatch indicates a transcription bug rather than a model property.
template <typename Scalar>
EfficiencyCertificate<Scalar> make_certificate(const DiscretePlant<Scalar>& plant,
                                               const AdmissibilityEnvelope<Scalar>& env,
                                               Eigen::Index T) {
  if (T < 2) throw InvalidParameter("certificate: horizon must be >= 2");
  validate(env);
  Scalar alpha = Scalar(1);
  for (const auto& w : detail::envelope_corners(env))
    alpha = std::max(alpha, compute_alpha(plant, w, T - 1));
  const Scalar rho = compute_rho(plant, env, T);
  const Scalar gamma = compute_gamma(alpha, rho, env.delta);

  if (gamma < Scalar(1)) {
    const Scalar lhs =
        (Scalar(1) - gamma) + gamma * (alpha + env.delta - Scalar(1)) / alpha;
    if (std::abs(static_cast<double>(lhs - rho)) > 1e-9 * std::max(1.0, std::abs(static_cast<double>(rho))))
      throw NumericError("certificate: internal identity check failed (lhs=" +
                         std::to_string(static_cast<double>(lhs)) + ", rho=" +
                         std::to_string(static_cast<double>(rho)) + ")");
  }

  EfficiencyCertificate<Scalar> cert;
  cert.T = T;
  cert.alpha = alpha;
  cert.rho = rho;
  cert.gamma = gamma;
  cert.valid = gamma < Scalar(1);
  if (cert.valid) cert.eps = compute_eps(rho, gamma, env.delta, T);
  return cert;
}

template <typename Scalar>
struct SandwichReport {
  EfficiencyCertificate<Scalar> certificate;
  Eigen::Index samples{0};
  // max over samples of (certified upper estimate of J_hat) / J
  Scalar max_certified_ratio{0};
  // max over samples of (realized truncated J_hat + optimal tail) / J
  Scalar max_realized_ratio{0};
};

/// Verify J(x) <= J_hat_T(x) <= (1+eps_T) J(x) on each sampled state for
/// constant true weights. The closed loop is truncated after `steps`; the
/// unobserved tail is bracketed by the optimal cost-to-go from below and by
/// the rho/(1-gamma) bound from above, so both inequalities are checked
/// without truncation slack.
template <typename Scalar>
SandwichReport<Scalar> certify_sandwich(const DiscretePlant<Scalar>& plant,
                                        const AdmissibilityEnvelope<Scalar>& env,
                                        const TypeProfile<Scalar>& truth, Eigen::Index T,
                                        const MatrixX<Scalar>& x_samples, Eigen::Index steps,
                                        Scalar rel_tol = Scalar(1e-6)) {
  const EfficiencyCertificate<Scalar> cert = make_certificate(plant, env, T);
  if (!cert.valid)
    throw NoCertificateError("sandwich: gamma_T >= 1 at T = " + std::to_string(cert.T));
  for (const auto& tv : truth.entries)
    if (auto v = validate_type_bounds(tv, env))
      throw InvalidParameter("sandwich: true types outside envelope: " + v->describe());

  const CostWeights<Scalar> w = assemble_weights(truth, plant.partition);
  const DareSolution<Scalar> dare = dare_fixed_point(plant, w);
  const RiccatiLadder<Scalar> ladder = riccati_finite(plant, w, T);
  const MatrixX<Scalar>& P_T = ladder.P.back();
  const Scalar tail_factor = cert.rho / (Scalar(1) - cert.gamma);
  const ProfileStream<Scalar> stream = constant_stream(truth);

  SandwichReport<Scalar> report;
  report.certificate = cert;
  report.samples = x_samples.cols();
  for (Eigen::Index s = 0; s < x_samples.cols(); ++s) {
    const VectorX<Scalar> x = x_samples.col(s);
    const Scalar J = quadratic_form(dare.P, x);
    const TrajectoryRecord<Scalar> traj = run_mpc(plant, x, stream, stream, T, steps);
    const Scalar realized = traj.stage_costs.sum();
    const VectorX<Scalar> x_end = traj.x.col(steps);
    const Scalar lower_est = realized + quadratic_form(dare.P, x_end);
    const Scalar upper_est = realized + tail_factor * quadratic_form(P_T, x_end);
    const Scalar scale = std::max<Scalar>(J, Scalar(1e-30));
    if (lower_est < J - rel_tol * scale)
      throw CertificateFalsified("sandwich lower bound violated at sample " + std::to_string(s) +
                                 ": J=" + std::to_string(static_cast<double>(J)) +
                                 " J_hat>=" + std::to_string(static_cast<double>(lower_est)));
    if (upper_est > (Scalar(1) + *cert.eps) * J + rel_tol * scale)
      throw CertificateFalsified("sandwich upper bound violated at sample " + std::to_string(s) +
                                 ": (1+eps)J=" +
                                 std::to_string(static_cast<double>((Scalar(1) + *cert.eps) * J)) +
                                 " J_hat<=" + std::to_string(static_cast<double>(upper_est)));
    if (J > Scalar(0)) {
      report.max_certified_ratio = std::max(report.max_certified_ratio, upper_est / J);
      report.max_realized_ratio = std::max(report.max_realized_ratio, lower_est / J);
    }
  }
  return report;
}

/// Time-varying variant: the optimal cost-to-go is approximated by a
/// backward Riccati sweep over the recorded window with zero terminal
/// weight, and J_hat is the realized truncated cost. Both sides carry the
/// same truncation, so this is meant for certified (decaying) systems where
/// the tails are negligible against the 1e-6 relative tolerance.
template <typename Scalar>
SandwichReport<Scalar> certify_sandwich(const DiscretePlant<Scalar>& plant,
                                        const AdmissibilityEnvelope<Scalar>& env,
                                        const ProfileStream<Scalar>& truth, Eigen::Index T,
                                        const MatrixX<Scalar>& x_samples, Eigen::Index steps,
                                        Scalar rel_tol = Scalar(1e-6)) {
  const EfficiencyCertificate<Scalar> cert = make_certificate(plant, env, T);
  if (!cert.valid)
    throw NoCertificateError("sandwich: gamma_T >= 1 at T = " + std::to_string(cert.T));
  for (Eigen::Index t = 0; t < steps; ++t)
    for (const auto& tv : truth(t).entries)
      if (auto v = validate_type_bounds(tv, env))
        throw InvalidParameter("sandwich: true types outside envelope: " + v->describe());

  // backward sweep with the per-step weights
  const Eigen::Index n = plant.A.rows();
  MatrixX<Scalar> P_opt = MatrixX<Scalar>::Zero(n, n);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const CostWeights<Scalar> w = assemble_weights(truth(t), plant.partition);
    const MatrixX<Scalar> K = detail::solve_gain(plant, P_opt, w.R, Scalar(1e13));
    P_opt = symmetrized(plant.A.transpose() * P_opt * (plant.A - plant.B * K) + w.Q);
  }

  SandwichReport<Scalar> report;
  report.certificate = cert;
  report.samples = x_samples.cols();
  for (Eigen::Index s = 0; s < x_samples.cols(); ++s) {
    const VectorX<Scalar> x = x_samples.col(s);
    const Scalar J = quadratic_form(P_opt, x);
    const TrajectoryRecord<Scalar> traj = run_mpc(plant, x, truth, truth, T, steps);
    const Scalar realized = traj.stage_costs.sum();
    const Scalar scale = std::max<Scalar>(J, Scalar(1e-30));
    if (realized < J - rel_tol * scale)
      throw CertificateFalsified("sandwich lower bound violated at sample " + std::to_string(s));
    if (realized > (Scalar(1) + *cert.eps) * J + rel_tol * scale)
      throw CertificateFalsified("sandwich upper bound violated at sample " + std::to_string(s));
    if (J > Scalar(0)) {
      report.max_certified_ratio = std::max(report.max_certified_ratio, realized / J);
      report.max_realized_ratio = std::max(report.max_realized_ratio, realized / J);
    }
  }
  return report;
}

template <typename Scalar>
struct DecayReport {
  // max over steps of J_{t+1,T}(x_{t+1}) - gamma * J_{t,T}(x_t); decay holds
  // when this is <= the test tolerance
  Scalar max_excess{0};
  Eigen::Index checked_steps{0};
};

/// Check the per-step contraction J_{t+1,T}(x_{t+1};theta_{t+1}) <=
/// gamma * J_{t,T}(x_t;theta_t) along a recorded closed-loop trajectory.
template <typename Scalar>
DecayReport<Scalar> decay_report(const DiscretePlant<Scalar>& plant,
                                 const TrajectoryRecord<Scalar>& traj, Eigen::Index T,
                                 Scalar gamma) {
  DecayReport<Scalar> report;
  if (traj.steps() < 2) return report;
  std::optional<TypeProfile<Scalar>> cached;
  MatrixX<Scalar> P;
  const auto value = [&](Eigen::Index t) {
    const TypeProfile<Scalar>& profile = traj.reported.at(static_cast<std::size_t>(t));
    if (!cached || !(*cached == profile)) {
      P = riccati_finite(plant, assemble_weights(profile, plant.partition), T).P.back();
      cached = profile;
    }
    return quadratic_form(P, traj.x.col(t).eval());
  };
  Scalar prev = value(0);
  for (Eigen::Index t = 1; t < traj.steps(); ++t) {
    const Scalar cur = value(t);
    report.max_excess = std::max(report.max_excess, cur - gamma * prev);
    ++report.checked_steps;
    prev = cur;
  }
  return report;
}

}  // namespace vcgmpc
