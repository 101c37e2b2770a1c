#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "kicksense/estimation.hpp"
#include "kicksense/model.hpp"

namespace kicksense {

/// Prior variance of the unknown per-mode velocity jump [(m/s)^2], one entry
/// per mode. Zero entries leave the corresponding velocity slot untouched.
struct KickPrior {
  Eigen::VectorXd sigma_sq;
};

/// Result of a two-segment kick estimate at sample t_p. The trace is split
/// into the samples before t_p and the samples from t_p on; the pre segment
/// is filtered forward, the post segment is filtered from a velocity-inflated
/// prior and then smoothed back to its left edge.
struct KickEstimate {
  std::int64_t t_p_index = 0;
  double t_p = 0.0;
  /// Post-minus-pre state difference, so a positive velocity kick produces a
  /// positive velocity entry.
  Eigen::VectorXd delta_x;
  /// Conservative covariance of delta_x: sum of the pre-segment prediction
  /// covariance and the post-segment smoothed covariance at t_p. The two
  /// estimate errors are generally correlated, which this sum upper-bounds.
  Eigen::MatrixXd cov_bound;
  /// Per-mode momentum m_eff_i * delta_v_i [kg m/s].
  Eigen::VectorXd modal_momentum;
  /// Set when either segment's covariance recursion had not reached
  /// stationarity (relative change above 1e-6 at the segment end).
  bool stationarity_warning = false;
};

/// Adds the kick prior variance onto the velocity-slot diagonal of a belief
/// covariance. All other entries, and the mean, are returned bit-identical.
GaussianBelief inflate_covariance(const GaussianBelief& belief,
                                  const std::vector<StateLabel>& labels,
                                  const KickPrior& prior);

/// Conservative covariance for the difference of two estimates.
Eigen::MatrixXd kick_bound(const Eigen::MatrixXd& cov_pre,
                           const Eigen::MatrixXd& cov_post);

/// Full kick estimation pipeline on a recorded trace. `initial` seeds the
/// pre-segment filter; pass the stationary belief for calibrated covariance
/// bounds. Requires 0 < t_p_index < trace length.
KickEstimate estimate_kick(const Trace& trace, const StateSpaceModel& model,
                           const DiscreteModel& dmodel, std::int64_t t_p_index,
                           const KickPrior& prior,
                           const GaussianBelief& initial);

}  // namespace kicksense
