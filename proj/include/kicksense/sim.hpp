#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "kicksense/control.hpp"
#include "kicksense/estimation.hpp"
#include "kicksense/kick.hpp"
#include "kicksense/model.hpp"

namespace kicksense {

/// An impulsive momentum transfer applied at one sample boundary, before that
/// sample's measurement. Each mode's velocity jumps by
/// weight_i * momentum / m_eff_i.
struct KickEvent {
  std::int64_t sample_index = 0;
  double momentum = 0.0;            ///< [kg m/s]
  Eigen::VectorXd mode_weights;     ///< per-mode projection, empty = mode 0 only
};

struct SimConfig {
  StateSpaceModel model;
  std::optional<RegulatorGains> regulator;  ///< feedback on when present
  double t_s = 1e-6;
  std::int64_t n_samples = 0;
  std::uint64_t seed = 0;
  bool stationary_start = false;  ///< draw x0 from the free-plant stationary law
  std::optional<Eigen::VectorXd> initial_state;
  std::vector<KickEvent> kicks;
  bool record_states = false;  ///< keep the ground-truth state trajectory
};

struct SimResult {
  Trace trace;
  Eigen::MatrixXd states;  ///< n x N ground truth, empty unless recorded
};

/// Exact-discretization closed-loop simulation. Per sample: apply any kick,
/// measure, let the regulator produce the held input, propagate with a
/// Gaussian process-noise draw of covariance Q_d. Identical config and seed
/// give bit-identical traces. When the regulator execution period divides
/// t_s, plant and regulator advance on the fine grid and the recorded
/// measurement is the average of the fine measurements in each sample period.
SimResult simulate(const SimConfig& config);

struct TrialResult {
  std::int64_t trial = 0;
  double applied_momentum = 0.0;
  KickEstimate estimate;
};

/// Kick-estimation ensemble: for each magnitude, `trials_per_magnitude`
/// independent simulations and estimates. Per-trial seeds derive from the
/// config seed and the trial index, so results do not depend on scheduling;
/// trials run OpenMP-parallel (`threads` = 0 uses the runtime default, 1
/// forces the serial reference path). The config must contain exactly one
/// kick event, whose momentum each magnitude overrides.
std::vector<TrialResult> run_montecarlo(const SimConfig& config,
                                        const std::vector<double>& magnitudes,
                                        int trials_per_magnitude,
                                        const KickPrior& prior,
                                        int threads = 0);

}  // namespace kicksense
