#pragma once

#include <random>

#include "vcgmpc/efficiency_bounds.hpp"
#include "vcgmpc/power_model.hpp"
#include "vcgmpc/types.hpp"

namespace vcgmpc::testing {

inline NetworkModel<double> table1_network() {
  NetworkModel<double> net;
  net.areas.push_back({3.5, 2.0, 50.0, 0.03, 40.0});
  net.areas.push_back({4.0, 2.75, 10.0, 0.07, 25.0});
  net.tie_lines.push_back({0, 1, 1.0});
  return net;
}

inline TypeProfile<double> table1_profile() {
  Eigen::Vector4d qd(10.0, 1.0, 500.0, 10.0);
  Eigen::MatrixXd R(1, 1);
  R << 0.1;
  TypeProfile<double> p;
  p.entries.push_back(make_type_vector<double>(0, qd.asDiagonal(), R));
  p.entries.push_back(make_type_vector<double>(1, qd.asDiagonal(), R));
  return p;
}

inline Eigen::VectorXd table1_impulse() {
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(8);
  x0(0) = -0.1;
  return x0;
}

/// Independent matrix exponential oracle: plain Taylor series, no scaling
/// tricks shared with the implementation under test.
inline Eigen::MatrixXd taylor_expm(const Eigen::MatrixXd& M, int terms = 40) {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(M.rows(), M.cols());
  Eigen::MatrixXd term = sum;
  for (int k = 1; k <= terms; ++k) {
    term = (term * M / static_cast<double>(k)).eval();
    sum += term;
  }
  return sum;
}

struct RandomSystem {
  DiscretePlant<double> plant;
  CostWeights<double> weights;
};

/// Random stable (hence stabilizable) discrete-time system with PSD Q and
/// PD R, sized n in [1, n_max], m in [1, m_max].
inline RandomSystem random_stable_system(std::mt19937_64& rng, int n_max = 4, int m_max = 2,
                                         double spectral_radius = 0.9) {
  std::uniform_int_distribution<int> nd(1, n_max), md(1, m_max);
  std::normal_distribution<double> gauss;
  const int n = nd(rng), m = md(rng);
  Eigen::MatrixXd A(n, n), B(n, m), G(n, n), H(m, m);
  for (auto* mat : {&A, &G})
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) (*mat)(r, c) = gauss(rng);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c) B(r, c) = gauss(rng);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) H(r, c) = gauss(rng);
  const double rho = A.eigenvalues().cwiseAbs().maxCoeff();
  if (rho > 1e-12) A *= spectral_radius / rho;
  RandomSystem sys;
  sys.plant = {A, B, 1.0, Partition::single(n, m)};
  sys.weights.Q = G.transpose() * G;
  sys.weights.R = H.transpose() * H + 0.1 * Eigen::MatrixXd::Identity(m, m);
  return sys;
}

/// Fast two-agent coupled system (scalar state and input per agent) whose
/// Riccati ladder converges in a handful of steps, so certificates are valid
/// at small horizons.
inline DiscretePlant<double> fast_two_agent_plant() {
  Eigen::MatrixXd A(2, 2), B(2, 2);
  A << 0.5, 0.1, 0.05, 0.6;
  B << 1.0, 0.0, 0.0, 1.0;
  return {A, B, 1.0, Partition::uniform(2, 1, 1)};
}

inline TypeProfile<double> fast_two_agent_profile() {
  Eigen::MatrixXd q(1, 1), r(1, 1);
  q << 1.0;
  r << 0.2;
  TypeProfile<double> p;
  p.entries.push_back(make_type_vector<double>(0, q, r));
  p.entries.push_back(make_type_vector<double>(1, q, r));
  return p;
}

inline Eigen::MatrixXd unit_sphere_samples(std::mt19937_64& rng, Eigen::Index dim,
                                           Eigen::Index count) {
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd samples(dim, count);
  for (Eigen::Index c = 0; c < count; ++c) {
    Eigen::VectorXd v(dim);
    do {
      for (Eigen::Index i = 0; i < dim; ++i) v(i) = gauss(rng);
    } while (v.norm() < 1e-8);
    samples.col(c) = v / v.norm();
  }
  return samples;
}

}  // namespace vcgmpc::testing
