#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kicksense/estimation.hpp"
#include "kicksense/model.hpp"
#include "kicksense/sim.hpp"
#include "kicksense/spectral.hpp"

namespace kicksense {

/// Provenance stamped into the first line of every output file:
/// `# config_hash=<16 hex digits> seed=<decimal>`.
struct Provenance {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

/// The header line itself, without trailing newline, for writers that do not
/// go through the CSV helpers (reports, serialized models).
std::string provenance_header(const Provenance& prov);

void write_trace_csv(const std::filesystem::path& file, const Trace& trace,
                     const Provenance& prov);
Trace read_trace_csv(const std::filesystem::path& file);

void write_states_csv(const std::filesystem::path& file, double t_s,
                      const Eigen::MatrixXd& states, const Provenance& prov);

void write_beliefs_csv(const std::filesystem::path& file,
                       const std::vector<GaussianBelief>& beliefs,
                       const Provenance& prov);

void write_psd_csv(const std::filesystem::path& file, const PsdEstimate& psd,
                   const Provenance& prov);

void write_ensemble_csv(const std::filesystem::path& file,
                        const std::vector<TrialResult>& trials,
                        const Provenance& prov);

void write_stats_csv(const std::filesystem::path& file,
                     const EnsembleStats& stats, const Provenance& prov);

std::vector<ModeShapeSample> read_mode_shape_csv(
    const std::filesystem::path& file);

}  // namespace kicksense
