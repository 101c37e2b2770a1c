#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kicksense/lti.hpp"

namespace kicksense {

/// Gaussian state belief. Throughout this library beliefs are one-step
/// predictions: the belief at sample k conditions on measurements strictly
/// before k.
struct GaussianBelief {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::MatrixXd cov;
};

/// Measured output and applied input, aligned sample by sample at spacing t_s.
struct Trace {
  double t_s = 0.0;
  std::vector<double> y;  ///< measured velocity [m/s]
  std::vector<double> u;  ///< applied drive [V]

  std::size_t size() const { return y.size(); }
};

struct KalmanStepResult {
  GaussianBelief next;  ///< prediction for sample k+1
  double innovation;    ///< y_k - C x_k
  double innovation_var;  ///< C cov C' + R_d
};

/// One predictor-form filter step: gain from the current prediction
/// covariance, measurement update and propagation fused into
///   x+ = A_d x + B_d u + K (y - C x),
///   S+ = A_d S A_d' + Q_d - K (C S A_d').
KalmanStepResult kf_step(const GaussianBelief& belief, double y, double u,
                         const DiscreteModel& model);

enum class BeliefStorage {
  full,             ///< keep every belief (needed for smoothing)
  innovations_only  ///< keep only innovations, O(1) memory
};

struct FilterRun {
  /// beliefs[k] is the prediction for sample k; beliefs[N] is the final
  /// prediction past the data. Empty when storage was innovations_only,
  /// except for the final belief which is always kept in `final_belief`.
  std::vector<GaussianBelief> beliefs;
  GaussianBelief final_belief;
  std::vector<double> innovations;
  std::vector<double> innovation_vars;
  /// Relative covariance change over the last step, a stationarity indicator.
  double final_cov_change = 0.0;
};

FilterRun kf_run(const Trace& trace, const DiscreteModel& model,
                 const GaussianBelief& initial,
                 BeliefStorage storage = BeliefStorage::full);

/// Fixed-interval smoother over a forward predictor pass. Backward recursion:
///   G_k = S_k A_d' (A_d S_k A_d' + Q_d)^-1,
///   x_s,k = x_k + G_k (x_s,k+1 - A_d x_k - B_d u_k),
///   S_s,k = S_k + G_k (S_s,k+1 - A_d S_k A_d' - Q_d) G_k'.
/// The last smoothed belief equals the last forward belief. `inputs` must
/// align with the forward beliefs (one input per transition).
std::vector<GaussianBelief> rts_run(const std::vector<GaussianBelief>& forward,
                                    std::span<const double> inputs,
                                    const DiscreteModel& model);

struct SteadyStateGains {
  Eigen::MatrixXd kalman_gain;  ///< stationary K
  Eigen::MatrixXd covariance;   ///< stationary prediction covariance
};

/// Stationary gain and covariance from the discrete fixed point.
SteadyStateGains steady_state_gains(const DiscreteModel& model);

}  // namespace kicksense
