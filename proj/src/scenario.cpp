#include "vcgmpc/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace vcgmpc {

const TypeVector<double>& TypeSchedule::at(Eigen::Index t) const {
  if (stages.empty()) throw ConfigError("type schedule is empty");
  const std::pair<Eigen::Index, TypeVector<double>>* best = &stages.front();
  for (const auto& stage : stages)
    if (stage.first <= t) best = &stage;
  return best->second;
}

bool operator==(const Scenario& a, const Scenario& b) {
  const auto net_eq = [](const NetworkModel<double>& x, const NetworkModel<double>& y) {
    if (x.areas.size() != y.areas.size() || x.tie_lines.size() != y.tie_lines.size())
      return false;
    for (std::size_t i = 0; i < x.areas.size(); ++i) {
      const auto& p = x.areas[i];
      const auto& q = y.areas[i];
      if (p.M != q.M || p.D != q.D || p.T_ch != q.T_ch || p.R_f != q.R_f || p.T_g != q.T_g)
        return false;
    }
    for (std::size_t i = 0; i < x.tie_lines.size(); ++i) {
      const auto& p = x.tie_lines[i];
      const auto& q = y.tie_lines[i];
      if (p.area_a != q.area_a || p.area_b != q.area_b || p.stiffness != q.stiffness)
        return false;
    }
    return true;
  };
  return net_eq(a.network, b.network) && a.dt == b.dt && a.sim_steps == b.sim_steps &&
         a.horizon == b.horizon && a.tax_mode == b.tax_mode && a.seed == b.seed &&
         a.x0.size() == b.x0.size() && a.x0 == b.x0 && a.true_types == b.true_types &&
         a.envelope == b.envelope;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// section -> ordered (key, value) pairs
using IniData = std::map<std::string, std::vector<std::pair<std::string, std::string>>>;

IniData parse_ini(std::string_view text) {
  IniData data;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const auto cut = raw.find_first_of("#;");
    std::string line = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      data.try_emplace(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
    data[section].emplace_back(trim(std::string_view(line).substr(0, eq)),
                               trim(std::string_view(line).substr(eq + 1)));
  }
  return data;
}

double parse_double(const std::string& value, const std::string& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(path + ": expected a number, got '" + value + "'");
  }
}

long parse_long(const std::string& value, const std::string& path) {
  long v = 0;
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || p != value.data() + value.size())
    throw ConfigError(path + ": expected an integer, got '" + value + "'");
  return v;
}

std::vector<double> parse_list(const std::string& value, const std::string& path) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string tok;
  while (in >> tok) out.push_back(parse_double(tok, path));
  if (out.empty()) throw ConfigError(path + ": expected a list of numbers");
  return out;
}

// Accepts a diagonal (n values) or a full row-major matrix (n*n values).
Eigen::MatrixXd parse_weight_matrix(const std::string& value, Eigen::Index n,
                                    const std::string& path) {
  const std::vector<double> vals = parse_list(value, path);
  if (static_cast<Eigen::Index>(vals.size()) == n) {
    Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(vals.data(), n);
    return d.asDiagonal();
  }
  if (static_cast<Eigen::Index>(vals.size()) == n * n) {
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) m(r, c) = vals[static_cast<std::size_t>(r * n + c)];
    return m;
  }
  throw ConfigError(path + ": expected " + std::to_string(n) + " (diagonal) or " +
                    std::to_string(n * n) + " (row-major) values");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_matrix(const Eigen::MatrixXd& m) {
  const bool diagonal = m.isDiagonal(0.0);
  std::string out;
  if (diagonal) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (i) out += ' ';
      out += fmt_double(m(i, i));
    }
  } else {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (r || c) out += ' ';
        out += fmt_double(m(r, c));
      }
  }
  return out;
}

const char* const kStateNames[kAreaStates] = {"omega", "pmech", "pv", "delta"};

}  // namespace

Scenario parse_scenario(std::string_view text) {
  const IniData data = parse_ini(text);
  Scenario sc;

  // -------- areas --------
  std::size_t n_areas = 0;
  for (const auto& [section, _] : data)
    if (section.rfind("areas.", 0) == 0) ++n_areas;
  if (n_areas == 0) throw ConfigError("no [areas.N] sections found");
  sc.network.areas.resize(n_areas);
  std::vector<bool> area_seen(n_areas, false);

  for (const auto& [section, entries] : data) {
    if (section.rfind("areas.", 0) != 0) continue;
    const long idx = parse_long(section.substr(6), section);
    if (idx < 1 || static_cast<std::size_t>(idx) > n_areas)
      throw ConfigError(section + ": area indices must be 1.." + std::to_string(n_areas) +
                        " without gaps");
    AreaParams<double> p{0, 0, 0, 0, 0};
    for (const auto& [key, value] : entries) {
      const std::string path = section + "." + key;
      if (key == "M")
        p.M = parse_double(value, path);
      else if (key == "D")
        p.D = parse_double(value, path);
      else if (key == "T_CH")
        p.T_ch = parse_double(value, path);
      else if (key == "R_f")
        p.R_f = parse_double(value, path);
      else if (key == "T_G")
        p.T_g = parse_double(value, path);
      else
        throw ConfigError(path + ": unknown key");
    }
    try {
      validate(p, section);
    } catch (const InvalidParameter& e) {
      throw ConfigError(e.what());
    }
    sc.network.areas[static_cast<std::size_t>(idx - 1)] = p;
    area_seen[static_cast<std::size_t>(idx - 1)] = true;
  }
  for (std::size_t i = 0; i < n_areas; ++i)
    if (!area_seen[i]) throw ConfigError("missing section [areas." + std::to_string(i + 1) + "]");

  // -------- network --------
  if (auto it = data.find("network"); it != data.end()) {
    for (const auto& [key, value] : it->second) {
      if (key == "areas") {
        if (parse_long(value, "network.areas") != static_cast<long>(n_areas))
          throw ConfigError("network.areas: does not match the number of [areas.N] sections");
      } else {
        throw ConfigError("network." + key + ": unknown key");
      }
    }
  }

  // -------- ties --------
  for (const auto& [section, entries] : data) {
    if (section.rfind("ties.", 0) != 0) continue;
    TieLine<double> tie{-1, -1, -1};
    for (const auto& [key, value] : entries) {
      const std::string path = section + "." + key;
      if (key == "area_a")
        tie.area_a = parse_long(value, path) - 1;
      else if (key == "area_b")
        tie.area_b = parse_long(value, path) - 1;
      else if (key == "T_tie")
        tie.stiffness = parse_double(value, path);
      else
        throw ConfigError(path + ": unknown key");
    }
    if (tie.area_a < 0 || tie.area_b < 0 || tie.stiffness < 0)
      throw ConfigError(section + ": requires area_a, area_b and non-negative T_tie");
    if (tie.area_a >= static_cast<Eigen::Index>(n_areas) ||
        tie.area_b >= static_cast<Eigen::Index>(n_areas) || tie.area_a == tie.area_b)
      throw ConfigError(section + ": invalid area pair");
    sc.network.tie_lines.push_back(tie);
  }

  // -------- types --------
  sc.true_types.resize(n_areas);
  std::vector<bool> types_seen(n_areas, false);
  for (const auto& [section, entries] : data) {
    if (section.rfind("types.", 0) != 0) continue;
    const long idx = parse_long(section.substr(6), section);
    if (idx < 1 || static_cast<std::size_t>(idx) > n_areas)
      throw ConfigError(section + ": type indices must match area indices");
    const Eigen::Index agent = static_cast<Eigen::Index>(idx - 1);
    std::map<Eigen::Index, Eigen::MatrixXd> q_stages, r_stages;
    for (const auto& [key, value] : entries) {
      const std::string path = section + "." + key;
      if (key == "Q")
        q_stages[0] = parse_weight_matrix(value, kAreaStates, path);
      else if (key == "R")
        r_stages[0] = parse_weight_matrix(value, 1, path);
      else if (key.rfind("Q_from_", 0) == 0)
        q_stages[parse_long(key.substr(7), path)] = parse_weight_matrix(value, kAreaStates, path);
      else if (key.rfind("R_from_", 0) == 0)
        r_stages[parse_long(key.substr(7), path)] = parse_weight_matrix(value, 1, path);
      else
        throw ConfigError(path + ": unknown key");
    }
    if (!q_stages.count(0) || !r_stages.count(0))
      throw ConfigError(section + ": Q and R are required");
    // Merge the Q and R step functions into one schedule.
    std::vector<Eigen::Index> switch_steps;
    for (const auto& [s, _] : q_stages) switch_steps.push_back(s);
    for (const auto& [s, _] : r_stages) switch_steps.push_back(s);
    std::sort(switch_steps.begin(), switch_steps.end());
    switch_steps.erase(std::unique(switch_steps.begin(), switch_steps.end()),
                       switch_steps.end());
    TypeSchedule schedule;
    for (const Eigen::Index s : switch_steps) {
      const auto q_it = std::prev(q_stages.upper_bound(s));
      const auto r_it = std::prev(r_stages.upper_bound(s));
      try {
        schedule.stages.emplace_back(s,
                                     make_type_vector<double>(agent, q_it->second, r_it->second));
      } catch (const InvalidParameter& e) {
        throw ConfigError(section + ": " + e.what());
      }
    }
    sc.true_types[static_cast<std::size_t>(agent)] = std::move(schedule);
    types_seen[static_cast<std::size_t>(agent)] = true;
  }
  for (std::size_t i = 0; i < n_areas; ++i)
    if (!types_seen[i]) throw ConfigError("missing section [types." + std::to_string(i + 1) + "]");

  // -------- mpc --------
  if (auto it = data.find("mpc"); it != data.end()) {
    for (const auto& [key, value] : it->second) {
      const std::string path = "mpc." + key;
      if (key == "dt") {
        sc.dt = parse_double(value, path);
        if (!(sc.dt > 0)) throw ConfigError(path + ": must be positive");
      } else if (key == "steps") {
        sc.sim_steps = parse_long(value, path);
        if (sc.sim_steps < 1) throw ConfigError(path + ": must be >= 1");
      } else if (key == "horizon") {
        if (value == "infinite")
          sc.horizon = kInfiniteHorizon;
        else {
          sc.horizon = parse_long(value, path);
          if (sc.horizon < 1) throw ConfigError(path + ": must be >= 1 or 'infinite'");
        }
      } else if (key == "tax_mode") {
        if (value == "on")
          sc.tax_mode = true;
        else if (value == "off")
          sc.tax_mode = false;
        else
          throw ConfigError(path + ": expected 'on' or 'off'");
      } else if (key == "seed") {
        sc.seed = static_cast<std::uint64_t>(parse_long(value, path));
      } else {
        throw ConfigError(path + ": unknown key");
      }
    }
  }

  // -------- envelope --------
  if (auto it = data.find("envelope"); it != data.end()) {
    for (const auto& [key, value] : it->second) {
      const std::string path = "envelope." + key;
      if (key == "q_lo")
        sc.envelope.q_lo = parse_double(value, path);
      else if (key == "q_hi")
        sc.envelope.q_hi = parse_double(value, path);
      else if (key == "r_lo")
        sc.envelope.r_lo = parse_double(value, path);
      else if (key == "r_hi")
        sc.envelope.r_hi = parse_double(value, path);
      else if (key == "delta")
        sc.envelope.delta = parse_double(value, path);
      else
        throw ConfigError(path + ": unknown key");
    }
    if (!(sc.envelope.q_lo > 0) || !(sc.envelope.r_lo > 0) ||
        sc.envelope.q_hi < sc.envelope.q_lo || sc.envelope.r_hi < sc.envelope.r_lo ||
        !(sc.envelope.delta >= 0 && sc.envelope.delta < 1))
      throw ConfigError("envelope: need 0 < lo <= hi and delta in [0, 1)");
  }

  // -------- disturbance --------
  const Eigen::Index n = static_cast<Eigen::Index>(n_areas) * kAreaStates;
  sc.x0 = Eigen::VectorXd::Zero(n);
  if (auto it = data.find("disturbance"); it != data.end()) {
    for (const auto& [key, value] : it->second) {
      const std::string path = "disturbance." + key;
      if (key == "x0") {
        const std::vector<double> vals = parse_list(value, path);
        if (static_cast<Eigen::Index>(vals.size()) != n)
          throw ConfigError(path + ": expected " + std::to_string(n) + " values");
        sc.x0 = Eigen::Map<const Eigen::VectorXd>(vals.data(), n);
        continue;
      }
      // component keys: area{i}_{omega|pmech|pv|delta}
      bool matched = false;
      for (std::size_t a = 0; a < n_areas && !matched; ++a)
        for (Eigen::Index s = 0; s < kAreaStates && !matched; ++s) {
          const std::string name = "area" + std::to_string(a + 1) + "_" + kStateNames[s];
          if (key == name) {
            sc.x0(static_cast<Eigen::Index>(a) * kAreaStates + s) = parse_double(value, path);
            matched = true;
          }
        }
      if (!matched) throw ConfigError(path + ": unknown key");
    }
  }

  for (const auto& [section, _] : data) {
    if (section == "network" || section == "mpc" || section == "envelope" ||
        section == "disturbance" || section.rfind("areas.", 0) == 0 ||
        section.rfind("ties.", 0) == 0 || section.rfind("types.", 0) == 0)
      continue;
    throw ConfigError("[" + section + "]: unknown section");
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string serialize_scenario(const Scenario& sc) {
  std::ostringstream out;
  const std::size_t n_areas = sc.network.areas.size();
  out << "[network]\nareas = " << n_areas << "\n";
  for (std::size_t i = 0; i < n_areas; ++i) {
    const auto& p = sc.network.areas[i];
    out << "\n[areas." << i + 1 << "]\n";
    out << "M = " << fmt_double(p.M) << "\nD = " << fmt_double(p.D) << "\nT_CH = "
        << fmt_double(p.T_ch) << "\nR_f = " << fmt_double(p.R_f) << "\nT_G = "
        << fmt_double(p.T_g) << "\n";
  }
  for (std::size_t i = 0; i < sc.network.tie_lines.size(); ++i) {
    const auto& t = sc.network.tie_lines[i];
    out << "\n[ties." << i + 1 << "]\narea_a = " << t.area_a + 1 << "\narea_b = " << t.area_b + 1
        << "\nT_tie = " << fmt_double(t.stiffness) << "\n";
  }
  for (std::size_t i = 0; i < sc.true_types.size(); ++i) {
    out << "\n[types." << i + 1 << "]\n";
    for (const auto& [from, tv] : sc.true_types[i].stages) {
      const std::string suffix = from == 0 ? "" : "_from_" + std::to_string(from);
      out << "Q" << suffix << " = " << fmt_matrix(tv.Q) << "\n";
      out << "R" << suffix << " = " << fmt_matrix(tv.R) << "\n";
    }
  }
  out << "\n[mpc]\ndt = " << fmt_double(sc.dt) << "\nsteps = " << sc.sim_steps << "\nhorizon = ";
  if (sc.horizon == kInfiniteHorizon)
    out << "infinite";
  else
    out << sc.horizon;
  out << "\ntax_mode = " << (sc.tax_mode ? "on" : "off") << "\nseed = " << sc.seed << "\n";
  out << "\n[envelope]\nq_lo = " << fmt_double(sc.envelope.q_lo) << "\nq_hi = "
      << fmt_double(sc.envelope.q_hi) << "\nr_lo = " << fmt_double(sc.envelope.r_lo)
      << "\nr_hi = " << fmt_double(sc.envelope.r_hi) << "\ndelta = "
      << fmt_double(sc.envelope.delta) << "\n";
  out << "\n[disturbance]\nx0 =";
  for (Eigen::Index i = 0; i < sc.x0.size(); ++i) out << ' ' << fmt_double(sc.x0(i));
  out << "\n";
  return out.str();
}

Scenario two_area_table1() {
  Scenario sc;
  sc.network.areas = {{3.5, 2.0, 50.0, 0.03, 40.0}, {4.0, 2.75, 10.0, 0.07, 25.0}};
  sc.network.tie_lines = {{0, 1, 1.0}};
  Eigen::Vector4d qd(10.0, 1.0, 500.0, 10.0);
  Eigen::MatrixXd R(1, 1);
  R << 0.1;
  for (Eigen::Index i = 0; i < 2; ++i) {
    TypeSchedule schedule;
    schedule.stages.emplace_back(0, make_type_vector<double>(i, qd.asDiagonal(), R));
    sc.true_types.push_back(std::move(schedule));
  }
  sc.x0 = Eigen::VectorXd::Zero(8);
  sc.x0(kOmega) = -0.1;
  return sc;
}

TypeVector<double> case2_misreport() {
  Eigen::Vector4d qd(10.0, 1.0, 1000.0, 10.0);
  Eigen::MatrixXd R(1, 1);
  R << 0.1;
  return make_type_vector<double>(0, qd.asDiagonal(), R);
}

DiscretePlant<double> build_plant(const Scenario& sc, bool forward_euler) {
  const ContinuousPlant<double> cont = assemble_network(sc.network);
  return forward_euler ? discretize_euler(cont, sc.dt) : discretize(cont, sc.dt);
}

TypeProfile<double> profile_at(const Scenario& sc, Eigen::Index t) {
  TypeProfile<double> profile;
  for (const auto& schedule : sc.true_types) profile.entries.push_back(schedule.at(t));
  return profile;
}

ProfileStream<double> true_stream(const Scenario& sc) {
  bool constant = true;
  for (const auto& schedule : sc.true_types) constant = constant && schedule.constant();
  if (constant) return constant_stream(profile_at(sc, 0));
  return [sc](Eigen::Index t) { return profile_at(sc, t); };
}

AdmissibilityEnvelope<double> build_envelope(const Scenario& sc, const Partition& partition) {
  return envelope_from_scales(profile_at(sc, 0), partition, sc.envelope.q_lo, sc.envelope.q_hi,
                              sc.envelope.r_lo, sc.envelope.r_hi, sc.envelope.delta);
}

MechanismSetup<double> mechanism_setup(const Scenario& sc) {
  if (sc.horizon == kInfiniteHorizon)
    throw ConfigError("mechanism: requires a finite horizon");
  MechanismSetup<double> setup;
  setup.plant = build_plant(sc);
  setup.x0 = sc.x0;
  setup.truth = true_stream(sc);
  setup.envelope = build_envelope(sc, setup.plant.partition);
  setup.T = sc.horizon;
  setup.steps = sc.sim_steps;
  setup.taxes = sc.tax_mode;
  return setup;
}

}  // namespace vcgmpc
