#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vcgmpc/efficiency_bounds.hpp"
#include "vcgmpc/power_model.hpp"
#include "vcgmpc/types.hpp"
#include "vcgmpc/vcg_mechanism.hpp"

namespace vcgmpc {

/// Malformed or inconsistent scenario configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sentinel horizon selecting the stationary infinite-horizon controller.
inline constexpr Eigen::Index kInfiniteHorizon = -1;

/// Step-function schedule of one agent's true types; stages are sorted by
/// start step and the first stage starts at 0.
struct TypeSchedule {
  std::vector<std::pair<Eigen::Index, TypeVector<double>>> stages;

  const TypeVector<double>& at(Eigen::Index t) const;
  bool constant() const { return stages.size() == 1; }

  friend bool operator==(const TypeSchedule& a, const TypeSchedule& b) {
    return a.stages == b.stages;
  }
};

/// Envelope given as multiples of the true weights at step 0.
struct EnvelopeSpec {
  double q_lo = 0.5;
  double q_hi = 2.0;
  double r_lo = 0.5;
  double r_hi = 2.0;
  double delta = 0.0;

  friend bool operator==(const EnvelopeSpec&, const EnvelopeSpec&) = default;
};

struct Scenario {
  NetworkModel<double> network;
  double dt = 0.1;
  Eigen::Index sim_steps = 600;
  Eigen::Index horizon = 50;  // kInfiniteHorizon selects LQR
  bool tax_mode = true;
  std::uint64_t seed = 0;
  Eigen::VectorXd x0;
  std::vector<TypeSchedule> true_types;  // one per area
  EnvelopeSpec envelope;

  friend bool operator==(const Scenario& a, const Scenario& b);
};

/// Parse the documented flat key schema (sections [network], [areas.N],
/// [ties.N], [types.N], [mpc], [envelope], [disturbance]). Unknown keys and
/// physics violations are reported with their key path.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::string& path);

/// Canonical text form; parse_scenario(serialize_scenario(s)) == s.
std::string serialize_scenario(const Scenario& scenario);

/// The bundled two-area case study scenario (dt = 0.1, 600 steps, T = 50,
/// impulse of -0.1 on area 1's frequency, taxes on).
Scenario two_area_table1();

/// The misreport used in the case study's second scenario: area 1 inflates
/// the steam-valve weight from 500 to 1000.
TypeVector<double> case2_misreport();

DiscretePlant<double> build_plant(const Scenario& scenario, bool forward_euler = false);
TypeProfile<double> profile_at(const Scenario& scenario, Eigen::Index t);
ProfileStream<double> true_stream(const Scenario& scenario);
AdmissibilityEnvelope<double> build_envelope(const Scenario& scenario,
                                             const Partition& partition);
MechanismSetup<double> mechanism_setup(const Scenario& scenario);

}  // namespace vcgmpc
