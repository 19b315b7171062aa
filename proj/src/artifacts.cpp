#include "vcgmpc/artifacts.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "vcgmpc/power_model.hpp"

namespace vcgmpc {

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace {

std::ofstream open_file(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary: byte-identical across platforms
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_trajectory_csv(const RunReport& report, const std::filesystem::path& dir) {
  const TrajectoryRecord<double>& traj = report.trajectory;
  const Eigen::Index n_areas = traj.partition.agents();
  std::ofstream out = open_file(dir / "trajectory.csv");
  out << "step,time_s";
  static constexpr std::array<const char*, kAreaStates> names{"omega", "pmech", "pv", "delta"};
  for (Eigen::Index a = 0; a < n_areas; ++a)
    for (const char* name : names) out << ",area" << a + 1 << "_" << name;
  for (Eigen::Index a = 0; a < n_areas; ++a) out << ",u" << a + 1;
  out << "\n";
  for (Eigen::Index t = 0; t < traj.steps(); ++t) {
    out << t << ',' << csv_number(static_cast<double>(t) * traj.dt);
    for (Eigen::Index i = 0; i < traj.x.rows(); ++i) out << ',' << csv_number(traj.x(i, t));
    for (Eigen::Index i = 0; i < traj.u.rows(); ++i) out << ',' << csv_number(traj.u(i, t));
    out << "\n";
  }
}

void write_costs_csv(const RunReport& report, const std::filesystem::path& dir) {
  const TrajectoryRecord<double>& traj = report.trajectory;
  const Eigen::Index n = traj.partition.agents();
  std::ofstream out = open_file(dir / "costs.csv");
  out << "step";
  for (Eigen::Index a = 0; a < n; ++a) out << ",c" << a + 1;
  for (Eigen::Index a = 0; a < n; ++a) out << ",cum_c" << a + 1;
  out << "\n";
  Eigen::VectorXd cum = Eigen::VectorXd::Zero(n);
  for (Eigen::Index t = 0; t < traj.steps(); ++t) {
    cum += traj.stage_costs.col(t);
    out << t;
    for (Eigen::Index a = 0; a < n; ++a) out << ',' << csv_number(traj.stage_costs(a, t));
    for (Eigen::Index a = 0; a < n; ++a) out << ',' << csv_number(cum(a));
    out << "\n";
  }
}

void write_taxes_csv(const RunReport& report, const std::filesystem::path& dir) {
  const TaxLedger<double>& ledger = *report.ledger;
  const Eigen::Index n = ledger.p.rows();
  std::ofstream out = open_file(dir / "taxes.csv");
  out << "step";
  for (Eigen::Index a = 0; a < n; ++a) out << ",p" << a + 1;
  for (Eigen::Index a = 0; a < n; ++a) out << ",K" << a + 1;
  for (Eigen::Index a = 0; a < n; ++a) out << ",pi" << a + 1;
  out << "\n";
  for (Eigen::Index t = 0; t < ledger.p.cols(); ++t) {
    out << t;
    for (Eigen::Index a = 0; a < n; ++a) out << ',' << csv_number(ledger.p(a, t));
    for (Eigen::Index a = 0; a < n; ++a) out << ',' << csv_number(ledger.K(a, t));
    for (Eigen::Index a = 0; a < n; ++a) out << ',' << csv_number(ledger.pi(a, t));
    out << "\n";
  }
}

// Minimal static line plot; one polyline per area.
void write_svg(const std::filesystem::path& path, const std::string& title, double dt,
               const std::vector<Eigen::VectorXd>& series,
               const std::vector<std::string>& labels) {
  static constexpr int kW = 720, kH = 360;
  static constexpr int kMargin = 50;
  static constexpr std::array<const char*, 6> colors{"#1f77b4", "#d62728", "#2ca02c",
                                                     "#9467bd", "#ff7f0e", "#8c564b"};
  double lo = 0, hi = 0;
  Eigen::Index steps = 0;
  for (const auto& s : series) {
    lo = std::min(lo, s.minCoeff());
    hi = std::max(hi, s.maxCoeff());
    steps = std::max(steps, s.size());
  }
  if (hi - lo < 1e-12) hi = lo + 1;
  const double t_end = static_cast<double>(steps - 1) * dt;
  const auto sx = [&](double t) { return kMargin + t / t_end * (kW - 2 * kMargin); };
  const auto sy = [&](double v) {
    return kH - kMargin - (v - lo) / (hi - lo) * (kH - 2 * kMargin);
  };

  std::ofstream out = open_file(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"14\">" << title << "</text>\n";
  // axes
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin
      << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
      << kH - kMargin << "\" stroke=\"black\"/>\n";
  if (lo < 0 && hi > 0)
    out << "<line x1=\"" << kMargin << "\" y1=\"" << csv_number(sy(0)) << "\" x2=\""
        << kW - kMargin << "\" y2=\"" << csv_number(sy(0))
        << "\" stroke=\"#cccccc\" stroke-dasharray=\"4 3\"/>\n";
  out << "<text x=\"" << kW - kMargin << "\" y=\"" << kH - kMargin + 18
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">t = "
      << csv_number(t_end) << " s</text>\n";
  out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << csv_number(hi)
      << "</text>\n";
  out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kH - kMargin
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << csv_number(lo)
      << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    out << "<polyline fill=\"none\" stroke=\"" << colors[k % colors.size()]
        << "\" stroke-width=\"1.5\" points=\"";
    for (Eigen::Index t = 0; t < series[k].size(); ++t) {
      if (t) out << ' ';
      out << csv_number(sx(static_cast<double>(t) * dt)) << ',' << csv_number(sy(series[k](t)));
    }
    out << "\"/>\n";
    out << "<text x=\"" << kW - kMargin + 4 << "\" y=\"" << kMargin + 16 * static_cast<int>(k)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << colors[k % colors.size()]
        << "\">" << labels[k] << "</text>\n";
  }
  out << "</svg>\n";
}

void write_plots(const RunReport& report, const std::filesystem::path& dir) {
  const TrajectoryRecord<double>& traj = report.trajectory;
  const Eigen::Index n_areas = traj.partition.agents();
  struct Panel {
    Eigen::Index state;
    const char* file;
    const char* title;
  };
  static constexpr std::array<Panel, 3> panels{{{kOmega, "freq_deviation.svg",
                                                 "Frequency deviation"},
                                                {kDelta, "angle_deviation.svg",
                                                 "Mechanical angle deviation"},
                                                {kPv, "valve_deviation.svg",
                                                 "Steam valve position deviation"}}};
  for (const auto& panel : panels) {
    std::vector<Eigen::VectorXd> series;
    std::vector<std::string> labels;
    for (Eigen::Index a = 0; a < n_areas; ++a) {
      series.push_back(
          traj.x.row(traj.partition.state(a).offset + panel.state).head(traj.steps()));
      labels.push_back("area " + std::to_string(a + 1));
    }
    write_svg(dir / panel.file, panel.title, traj.dt, series, labels);
  }
}

}  // namespace

void emit_artifacts(const RunReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_trajectory_csv(report, out_dir);
  write_costs_csv(report, out_dir);
  if (report.ledger) write_taxes_csv(report, out_dir);
  write_plots(report, out_dir);
}

void emit_certificate_csv(const std::vector<CertificateRow>& rows,
                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out = open_file(out_dir / "certificate.csv");
  out << "T,alpha,rho,gamma,eps,valid,mpc_step_ms\n";
  for (const auto& row : rows) {
    const auto& c = row.certificate;
    out << c.T << ',' << csv_number(c.alpha) << ',' << csv_number(c.rho) << ','
        << csv_number(c.gamma) << ',' << (c.eps ? csv_number(*c.eps) : "") << ','
        << (c.valid ? 1 : 0) << ',' << csv_number(row.mpc_step_ms) << "\n";
  }
}

}  // namespace vcgmpc
