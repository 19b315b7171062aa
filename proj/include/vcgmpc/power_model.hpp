#pragma once

#include <unsupported/Eigen/MatrixFunctions>

#include <string>
#include <utility>

#include "vcgmpc/types.hpp"

namespace vcgmpc {

// Local state ordering within each area.
enum AreaState : Eigen::Index {
  kOmega = 0,  // frequency deviation
  kPmech = 1,  // mechanical power deviation
  kPv = 2,     // steam valve position deviation
  kDelta = 3,  // mechanical angle deviation
};
inline constexpr Eigen::Index kAreaStates = 4;

/// Per-area swing-equation parameters.
template <typename Scalar>
struct AreaParams {
  Scalar M;     // angular momentum, p.u.*s
  Scalar D;     // load-frequency damping, p.u.
  Scalar T_ch;  // charging time constant, s
  Scalar R_f;   // droop, frequency / unit output
  Scalar T_g;   // governor time constant, s
};

template <typename Scalar>
void validate(const AreaParams<Scalar>& p, const std::string& where = "area") {
  auto check = [&](Scalar v, const char* name) {
    if (!(v > Scalar(0)))
      throw InvalidParameter(where + ": parameter " + name + " must be strictly positive");
  };
  check(p.M, "M");
  check(p.D, "D");
  check(p.T_ch, "T_CH");
  check(p.R_f, "R_f");
  check(p.T_g, "T_G");
}

template <typename Scalar>
struct TieLine {
  Eigen::Index area_a{0};
  Eigen::Index area_b{0};
  Scalar stiffness{0};  // p.u./rad
};

template <typename Scalar>
struct NetworkModel {
  std::vector<AreaParams<Scalar>> areas;
  std::vector<TieLine<Scalar>> tie_lines;
};

template <typename Scalar>
struct ContinuousPlant {
  MatrixX<Scalar> A_c;  // 4N x 4N
  MatrixX<Scalar> B_c;  // 4N x N
  Partition partition;
};

template <typename Scalar>
struct DiscretePlant {
  MatrixX<Scalar> A;
  MatrixX<Scalar> B;
  Scalar dt{0};
  Partition partition;
};

/// Local dynamics of one area, tie coupling excluded:
///   d(dw)/dt  = -(D/M) dw + (1/M) dPm
///   d(dPm)/dt = -(1/T_CH) dPm + (1/T_CH) dPv
///   d(dPv)/dt = -(1/T_G) dPv - (1/(R_f T_G)) dw + (1/T_G) dPref
///   d(dd)/dt  = dw
/// Returns the 4x4 state block and the 4x1 column for the command input dPref.
template <typename Scalar>
std::pair<Eigen::Matrix<Scalar, 4, 4>, Eigen::Matrix<Scalar, 4, 1>> build_area_block(
    const AreaParams<Scalar>& p) {
  validate(p);
  Eigen::Matrix<Scalar, 4, 4> A = Eigen::Matrix<Scalar, 4, 4>::Zero();
  Eigen::Matrix<Scalar, 4, 1> b = Eigen::Matrix<Scalar, 4, 1>::Zero();
  A(kOmega, kOmega) = -p.D / p.M;
  A(kOmega, kPmech) = Scalar(1) / p.M;
  A(kPmech, kPmech) = -Scalar(1) / p.T_ch;
  A(kPmech, kPv) = Scalar(1) / p.T_ch;
  A(kPv, kPv) = -Scalar(1) / p.T_g;
  A(kPv, kOmega) = -Scalar(1) / (p.R_f * p.T_g);
  A(kDelta, kOmega) = Scalar(1);
  b(kPv) = Scalar(1) / p.T_g;
  return {A, b};
}

/// Block-diagonal area dynamics plus antisymmetric tie-line coupling: a line
/// of stiffness T between areas i and j contributes -T/M_i at (w_i, d_i),
/// +T/M_i at (w_i, d_j), and the mirrored entries scaled by 1/M_j.
template <typename Scalar>
ContinuousPlant<Scalar> assemble_network(const NetworkModel<Scalar>& net) {
  const auto n_areas = static_cast<Eigen::Index>(net.areas.size());
  if (n_areas < 1) throw InvalidParameter("network: at least one area required");

  ContinuousPlant<Scalar> plant;
  plant.partition = Partition::uniform(n_areas, kAreaStates, 1);
  plant.A_c = MatrixX<Scalar>::Zero(kAreaStates * n_areas, kAreaStates * n_areas);
  plant.B_c = MatrixX<Scalar>::Zero(kAreaStates * n_areas, n_areas);

  for (Eigen::Index i = 0; i < n_areas; ++i) {
    auto [A, b] = build_area_block(net.areas[static_cast<std::size_t>(i)]);
    plant.A_c.block(kAreaStates * i, kAreaStates * i, kAreaStates, kAreaStates) = A;
    plant.B_c.block(kAreaStates * i, i, kAreaStates, 1) = b;
  }

  for (const auto& tie : net.tie_lines) {
    if (tie.area_a < 0 || tie.area_a >= n_areas || tie.area_b < 0 || tie.area_b >= n_areas)
      throw InvalidParameter("tie line: area index out of range");
    if (tie.area_a == tie.area_b)
      throw InvalidParameter("tie line: endpoints must differ");
    if (!(tie.stiffness >= Scalar(0)))
      throw InvalidParameter("tie line: stiffness must be non-negative");
    const Eigen::Index i = tie.area_a;
    const Eigen::Index j = tie.area_b;
    const Scalar Mi = net.areas[static_cast<std::size_t>(i)].M;
    const Scalar Mj = net.areas[static_cast<std::size_t>(j)].M;
    const Eigen::Index wi = kAreaStates * i + kOmega;
    const Eigen::Index wj = kAreaStates * j + kOmega;
    const Eigen::Index di = kAreaStates * i + kDelta;
    const Eigen::Index dj = kAreaStates * j + kDelta;
    plant.A_c(wi, di) += -tie.stiffness / Mi;
    plant.A_c(wi, dj) += tie.stiffness / Mi;
    plant.A_c(wj, dj) += -tie.stiffness / Mj;
    plant.A_c(wj, di) += tie.stiffness / Mj;
  }
  return plant;
}

/// Exact zero-order hold: A = exp(A_c dt), B = (int_0^dt exp(A_c s) ds) B_c,
/// both read off the exponential of the augmented matrix [[A_c, B_c], [0, 0]].
template <typename Scalar>
DiscretePlant<Scalar> discretize(const ContinuousPlant<Scalar>& plant, Scalar dt) {
  if (!(dt > Scalar(0))) throw InvalidParameter("discretize: dt must be positive");
  const Eigen::Index n = plant.A_c.rows();
  const Eigen::Index m = plant.B_c.cols();
  MatrixX<Scalar> aug = MatrixX<Scalar>::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = plant.A_c;
  aug.topRightCorner(n, m) = plant.B_c;
  MatrixX<Scalar> phi = (aug * dt).exp();
  return {phi.topLeftCorner(n, n), phi.topRightCorner(n, m), dt, plant.partition};
}

/// Forward Euler, kept for discretization sensitivity studies.
template <typename Scalar>
DiscretePlant<Scalar> discretize_euler(const ContinuousPlant<Scalar>& plant, Scalar dt) {
  if (!(dt > Scalar(0))) throw InvalidParameter("discretize: dt must be positive");
  const Eigen::Index n = plant.A_c.rows();
  MatrixX<Scalar> A = MatrixX<Scalar>::Identity(n, n) + plant.A_c * dt;
  return {std::move(A), plant.B_c * dt, dt, plant.partition};
}

}  // namespace vcgmpc
