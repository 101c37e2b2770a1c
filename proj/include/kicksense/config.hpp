#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kicksense/control.hpp"
#include "kicksense/lti.hpp"
#include "kicksense/model.hpp"

namespace kicksense {

struct ControlConfig {
  bool enabled = true;
  double n_u = 1e-12;  ///< input weight [J/V^2]
  double t_exec_s = kDefaultExecPeriod;
};

struct SimSection {
  double t_s = 1e-6;
  std::int64_t n_samples = 0;
  std::uint64_t seed = 0;
  bool stationary_start = false;
};

struct KickSection {
  std::int64_t t_p_index = 0;
  std::vector<double> magnitudes;  ///< [kg m/s]
  int trials = 100;
  double prior_scale = 1e6;  ///< kick prior = scale * stationary velocity variance
  std::vector<double> mode_weights;  ///< empty = first mode only
};

struct AnalysisSection {
  int segment_length = 1 << 16;
  double overlap = 0.5;
  std::string window = "hann";
  double band_low_hz = 10e3;
  double band_high_hz = 130e3;
};

struct ExperimentConfig {
  double temperature_k = 300.0;
  double measurement_noise_psd = 0.0;  ///< one-sided [(m/s)^2/Hz]
  std::vector<ModeParams> modes;
  DisturbanceParams disturbance;
  ControlConfig control;
  SimSection sim;
  KickSection kick;
  AnalysisSection analysis;
};

/// Parses and validates a JSON config. Messages name the offending field by
/// path, e.g. "modes[1].q: must be > 0".
ExperimentConfig load_config(const std::filesystem::path& file);
ExperimentConfig parse_config(const std::string& json_text);

/// FNV-1a hash of the canonical serialized form, recorded in output headers
/// so results can be traced back to their exact configuration.
std::uint64_t config_hash(const ExperimentConfig& config);

std::string serialize_config(const ExperimentConfig& config);

/// Model and gain serialization. Round-trips are bit-exact.
std::string serialize_model(const StateSpaceModel& model,
                            const DiscreteModel& dmodel);
void deserialize_model(const std::string& json_text, StateSpaceModel& model,
                       DiscreteModel& dmodel);
std::string serialize_gains(const RegulatorGains& gains);
RegulatorGains deserialize_gains(const std::string& json_text);

}  // namespace kicksense
