#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vcgmpc {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Invalid physical or cost parameters (non-positive time constants,
/// indefinite weights, out-of-range indices).
struct InvalidParameter : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Conditioning failures, divergent fixed-point iterations and the like.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Closed-loop state escaped the blow-up guard.
struct InstabilityError : NumericError {
  using NumericError::NumericError;
};

/// Requested a suboptimality certificate but gamma_T >= 1.
struct NoCertificateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Contiguous index range [offset, offset+size) into a stacked vector.
struct Span {
  Eigen::Index offset{0};
  Eigen::Index size{0};

  friend bool operator==(const Span&, const Span&) = default;
};

/// Agent-wise layout of the stacked state and input vectors. Agents own
/// contiguous, non-overlapping slices in declaration order.
class Partition {
 public:
  Partition() = default;
  Partition(std::vector<Span> state, std::vector<Span> input)
      : state_(std::move(state)), input_(std::move(input)) {
    if (state_.size() != input_.size())
      throw DimensionMismatch("partition: state/input agent counts differ");
  }

  /// N agents, each with nx local states and nu local inputs.
  static Partition uniform(Eigen::Index agents, Eigen::Index nx, Eigen::Index nu) {
    std::vector<Span> s, u;
    s.reserve(agents);
    u.reserve(agents);
    for (Eigen::Index i = 0; i < agents; ++i) {
      s.push_back({i * nx, nx});
      u.push_back({i * nu, nu});
    }
    return Partition(std::move(s), std::move(u));
  }

  /// Whole plant owned by one agent; used for generic test systems.
  static Partition single(Eigen::Index nx, Eigen::Index nu) {
    return Partition({{0, nx}}, {{0, nu}});
  }

  Eigen::Index agents() const { return static_cast<Eigen::Index>(state_.size()); }
  const Span& state(Eigen::Index i) const { return state_.at(static_cast<std::size_t>(i)); }
  const Span& input(Eigen::Index i) const { return input_.at(static_cast<std::size_t>(i)); }

  Eigen::Index state_dim() const {
    Eigen::Index n = 0;
    for (const auto& s : state_) n += s.size;
    return n;
  }
  Eigen::Index input_dim() const {
    Eigen::Index m = 0;
    for (const auto& s : input_) m += s.size;
    return m;
  }

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::vector<Span> state_;
  std::vector<Span> input_;
};

template <typename Derived>
auto segment(const Eigen::MatrixBase<Derived>& v, const Span& s) {
  return v.segment(s.offset, s.size);
}

template <typename Derived>
auto block(const Eigen::MatrixBase<Derived>& m, const Span& row, const Span& col) {
  return m.block(row.offset, col.offset, row.size, col.size);
}

template <typename Derived>
MatrixX<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& m) {
  return (m + m.transpose()) / 2;
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  Eigen::SelfAdjointEigenSolver<MatrixX<typename Derived::Scalar>> es(
      symmetrized(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

template <typename Derived>
typename Derived::Scalar max_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  Eigen::SelfAdjointEigenSolver<MatrixX<typename Derived::Scalar>> es(
      symmetrized(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m,
                  typename Derived::Scalar tol = typename Derived::Scalar(1e-10)) {
  if (m.rows() != m.cols()) return false;
  const auto scale = std::max<typename Derived::Scalar>(1, m.template lpNorm<Eigen::Infinity>());
  return (m - m.transpose()).template lpNorm<Eigen::Infinity>() <= tol * scale;
}

template <typename Derived>
bool is_positive_semidefinite(const Eigen::MatrixBase<Derived>& m,
                              typename Derived::Scalar tol = typename Derived::Scalar(1e-10)) {
  return is_symmetric(m) && min_eigenvalue(m) >= -tol;
}

template <typename Derived>
bool is_positive_definite(const Eigen::MatrixBase<Derived>& m,
                          typename Derived::Scalar tol = typename Derived::Scalar(0)) {
  return is_symmetric(m) && min_eigenvalue(m) > tol;
}

template <typename MatDerived, typename VecDerived>
typename MatDerived::Scalar quadratic_form(const Eigen::MatrixBase<MatDerived>& m,
                                           const Eigen::MatrixBase<VecDerived>& x) {
  return x.dot(m * x);
}

/// Agent i's private quadratic weights (Q_i over its local state, R_i over
/// its local input).
template <typename Scalar>
struct TypeVector {
  Eigen::Index agent{0};
  MatrixX<Scalar> Q;
  MatrixX<Scalar> R;

  friend bool operator==(const TypeVector& a, const TypeVector& b) {
    return a.agent == b.agent && a.Q == b.Q && a.R == b.R;
  }
};

/// Validating factory: Q must be PSD, R must be PD, both symmetric.
template <typename Scalar>
TypeVector<Scalar> make_type_vector(Eigen::Index agent, MatrixX<Scalar> Q, MatrixX<Scalar> R) {
  if (!is_symmetric(Q) || !is_positive_semidefinite(Q))
    throw InvalidParameter("type vector: Q must be symmetric PSD (agent " +
                           std::to_string(agent) + ")");
  if (!is_symmetric(R) || !is_positive_definite(R))
    throw InvalidParameter("type vector: R must be symmetric PD (agent " +
                           std::to_string(agent) + ")");
  return TypeVector<Scalar>{agent, symmetrized(Q), symmetrized(R)};
}

/// One reported (or true) type per agent for a single time step.
template <typename Scalar>
struct TypeProfile {
  std::vector<TypeVector<Scalar>> entries;

  const TypeVector<Scalar>& agent(Eigen::Index i) const {
    return entries.at(static_cast<std::size_t>(i));
  }

  friend bool operator==(const TypeProfile& a, const TypeProfile& b) {
    return a.entries == b.entries;
  }
};

template <typename Scalar>
void validate_profile(const TypeProfile<Scalar>& profile, const Partition& partition) {
  if (static_cast<Eigen::Index>(profile.entries.size()) != partition.agents())
    throw DimensionMismatch("profile: exactly one type vector per agent required");
  for (Eigen::Index i = 0; i < partition.agents(); ++i) {
    const auto& tv = profile.agent(i);
    if (tv.agent != i)
      throw DimensionMismatch("profile: entry " + std::to_string(i) + " has agent index " +
                              std::to_string(tv.agent));
    if (tv.Q.rows() != partition.state(i).size || tv.R.rows() != partition.input(i).size)
      throw DimensionMismatch("profile: weight dimensions do not match partition for agent " +
                              std::to_string(i));
  }
}

/// Stacked block-diagonal weights over all agents.
template <typename Scalar>
struct CostWeights {
  MatrixX<Scalar> Q;
  MatrixX<Scalar> R;
};

template <typename Scalar>
CostWeights<Scalar> assemble_weights(const TypeProfile<Scalar>& profile,
                                     const Partition& partition) {
  validate_profile(profile, partition);
  CostWeights<Scalar> w;
  w.Q = MatrixX<Scalar>::Zero(partition.state_dim(), partition.state_dim());
  w.R = MatrixX<Scalar>::Zero(partition.input_dim(), partition.input_dim());
  for (Eigen::Index i = 0; i < partition.agents(); ++i) {
    const auto& s = partition.state(i);
    const auto& u = partition.input(i);
    w.Q.block(s.offset, s.offset, s.size, s.size) = profile.agent(i).Q;
    w.R.block(u.offset, u.offset, u.size, u.size) = profile.agent(i).R;
  }
  return w;
}

/// Per-step type source; step index starts at 0.
template <typename Scalar>
using ProfileStream = std::function<TypeProfile<Scalar>(Eigen::Index)>;

template <typename Scalar>
ProfileStream<Scalar> constant_stream(TypeProfile<Scalar> profile) {
  return [profile = std::move(profile)](Eigen::Index) { return profile; };
}

/// Replace one agent's types in a base stream.
template <typename Scalar>
ProfileStream<Scalar> override_agent(ProfileStream<Scalar> base, Eigen::Index agent,
                                     std::function<TypeVector<Scalar>(Eigen::Index)> types) {
  return [base = std::move(base), agent, types = std::move(types)](Eigen::Index k) {
    TypeProfile<Scalar> p = base(k);
    p.entries.at(static_cast<std::size_t>(agent)) = types(k);
    return p;
  };
}

/// Closed-loop run record. Stage costs are evaluated under the true types;
/// the reported profiles that drove the controller are kept alongside.
template <typename Scalar>
struct TrajectoryRecord {
  MatrixX<Scalar> x;            // n x (steps+1)
  MatrixX<Scalar> u;            // m x steps
  MatrixX<Scalar> stage_costs;  // agents x steps
  std::vector<TypeProfile<Scalar>> reported;
  std::vector<TypeProfile<Scalar>> true_types;
  Partition partition;
  Scalar dt{1};

  Eigen::Index steps() const { return u.cols(); }
};

/// Per-agent per-step taxes p, marginal-contribution constants K, and
/// tax-to-go pi (suffix sums of p).
template <typename Scalar>
struct TaxLedger {
  MatrixX<Scalar> p;   // agents x steps
  MatrixX<Scalar> K;   // agents x steps
  MatrixX<Scalar> pi;  // agents x steps
};

}  // namespace vcgmpc
