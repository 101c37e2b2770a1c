#include "kicksense/csv.hpp"

#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kicksense/errors.hpp"

namespace kicksense {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& file,
                       const Provenance& prov) {
  std::ofstream out(file);
  if (!out)
    throw ValidationError("cannot open '" + file.string() + "' for writing");
  out << provenance_header(prov) << '\n';
  return out;
}

std::ifstream open_in(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open '" + file.string() + "'");
  return in;
}

bool data_line(const std::string& line) {
  return !line.empty() && line[0] != '#' &&
         (std::isdigit(static_cast<unsigned char>(line[0])) || line[0] == '-' ||
          line[0] == '+' || line[0] == '.');
}

std::vector<double> split_numbers(const std::string& line,
                                  const std::string& file) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ValidationError(file + ": malformed number '" + cell + "'");
    }
  }
  return out;
}

}  // namespace

std::string provenance_header(const Provenance& prov) {
  char header[64];
  std::snprintf(header, sizeof(header),
                "# config_hash=%016" PRIx64 " seed=%" PRIu64, prov.config_hash,
                prov.seed);
  return header;
}

void write_trace_csv(const std::filesystem::path& file, const Trace& trace,
                     const Provenance& prov) {
  std::ofstream out = open_out(file, prov);
  out << "t,y,u\n";
  for (std::size_t k = 0; k < trace.size(); ++k)
    out << fmt(k * trace.t_s) << ',' << fmt(trace.y[k]) << ','
        << fmt(trace.u[k]) << '\n';
}

Trace read_trace_csv(const std::filesystem::path& file) {
  std::ifstream in = open_in(file);
  Trace trace;
  std::string line;
  double t0 = 0.0, t1 = 0.0;
  while (std::getline(in, line)) {
    if (!data_line(line)) continue;
    const std::vector<double> cells = split_numbers(line, file.string());
    if (cells.size() != 3)
      throw ValidationError(file.string() + ": expected 3 columns (t,y,u)");
    if (trace.y.empty())
      t0 = cells[0];
    else if (trace.y.size() == 1)
      t1 = cells[0];
    trace.y.push_back(cells[1]);
    trace.u.push_back(cells[2]);
  }
  if (trace.y.size() < 2)
    throw ValidationError(file.string() + ": need at least two samples");
  trace.t_s = t1 - t0;
  if (!(trace.t_s > 0.0))
    throw ValidationError(file.string() + ": non-increasing time column");
  return trace;
}

void write_states_csv(const std::filesystem::path& file, double t_s,
                      const Eigen::MatrixXd& states, const Provenance& prov) {
  std::ofstream out = open_out(file, prov);
  out << "t";
  for (Eigen::Index i = 0; i < states.rows(); ++i) out << ",x" << i + 1;
  out << '\n';
  for (Eigen::Index k = 0; k < states.cols(); ++k) {
    out << fmt(k * t_s);
    for (Eigen::Index i = 0; i < states.rows(); ++i)
      out << ',' << fmt(states(i, k));
    out << '\n';
  }
}

void write_beliefs_csv(const std::filesystem::path& file,
                       const std::vector<GaussianBelief>& beliefs,
                       const Provenance& prov) {
  std::ofstream out = open_out(file, prov);
  if (beliefs.empty()) return;
  const Eigen::Index n = beliefs.front().x.size();
  out << "t";
  for (Eigen::Index i = 0; i < n; ++i) out << ",x" << i + 1;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) out << ",cov" << i + 1 << "_" << j + 1;
  out << '\n';
  for (const GaussianBelief& b : beliefs) {
    out << fmt(b.t);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << fmt(b.x(i));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) out << ',' << fmt(b.cov(i, j));
    out << '\n';
  }
}

void write_psd_csv(const std::filesystem::path& file, const PsdEstimate& psd,
                   const Provenance& prov) {
  std::ofstream out = open_out(file, prov);
  out << "freq_hz,psd\n";
  for (std::size_t j = 0; j < psd.freqs_hz.size(); ++j)
    out << fmt(psd.freqs_hz[j]) << ',' << fmt(psd.values[j]) << '\n';
}

void write_ensemble_csv(const std::filesystem::path& file,
                        const std::vector<TrialResult>& trials,
                        const Provenance& prov) {
  std::ofstream out = open_out(file, prov);
  out << "trial,p_applied,p_est_mode1,dv1_est,dz1_est,bound_dv1\n";
  for (const TrialResult& t : trials) {
    // Built models always place mode 0 at states [position, velocity] = [0, 1].
    if (t.estimate.delta_x.size() < 2)
      throw ValidationError("ensemble: estimate has fewer than two states");
    out << t.trial << ',' << fmt(t.applied_momentum) << ','
        << fmt(t.estimate.modal_momentum(0)) << ',' << fmt(t.estimate.delta_x(1))
        << ',' << fmt(t.estimate.delta_x(0)) << ','
        << fmt(std::sqrt(t.estimate.cov_bound(1, 1))) << '\n';
  }
}

void write_stats_csv(const std::filesystem::path& file,
                     const EnsembleStats& stats, const Provenance& prov) {
  std::ofstream out = open_out(file, prov);
  out << "magnitude,mean,std,n\n";
  for (const GroupStats& g : stats.groups)
    out << fmt(g.magnitude) << ',' << fmt(g.mean) << ',' << fmt(g.stddev) << ','
        << g.n << '\n';
}

std::vector<ModeShapeSample> read_mode_shape_csv(
    const std::filesystem::path& file) {
  std::ifstream in = open_in(file);
  std::vector<ModeShapeSample> shape;
  std::string line;
  while (std::getline(in, line)) {
    if (!data_line(line)) continue;
    const std::vector<double> cells = split_numbers(line, file.string());
    if (cells.size() != 6)
      throw ValidationError(file.string() +
                            ": expected 6 columns (x,y,z,phi,rho,dv)");
    shape.push_back({cells[0], cells[1], cells[2], cells[3], cells[4], cells[5]});
  }
  if (shape.empty())
    throw ValidationError(file.string() + ": no mode shape samples");
  return shape;
}

}  // namespace kicksense
