#pragma once

#include <Eigen/Dense>

#include "kicksense/model.hpp"

namespace kicksense {

/// Observer-based feedback compensator. The continuous form runs
///   dx_f/dt = A_f x_f + K_f y,   u = -K_c x_f,
/// with A_f = A - K_f C - B K_c; the discrete form advances at the execution
/// period t_exec with A_df = exp(A_f t_exec), K_df = A_f^-1 (A_df - I) K_f.
struct RegulatorGains {
  Eigen::MatrixXd k_c;   ///< state feedback gain, l x n
  Eigen::MatrixXd k_f;   ///< continuous observer gain, n x m_y
  Eigen::MatrixXd a_f;   ///< closed compensator drift, n x n
  Eigen::MatrixXd a_df;  ///< discrete compensator transition
  Eigen::MatrixXd k_df;  ///< discrete measurement injection
  double t_exec = 0.0;
};

/// Quadratic weights for the regulator design. The state weight is modal
/// energy, diag(k_eff_i, m_eff_i) per mode block and zero on disturbance
/// states; the input weight trades drive power against residual energy.
struct CostWeights {
  Eigen::MatrixXd m;  ///< state weight, n x n, symmetric PSD
  Eigen::MatrixXd n;  ///< input weight, l x l, symmetric PD
};

/// Modal-energy default weights for a built model, with scalar input weight
/// n_u [J/V^2].
CostWeights default_cost_weights(const StateSpaceModel& model, double n_u);

/// Optimal state feedback K_c = N^-1 B' V from the control Riccati equation.
Eigen::MatrixXd lqr_gain(const StateSpaceModel& model, const CostWeights& w);

/// Stationary observer gain K_f = S C' R^-1 from the filter Riccati equation,
/// solved through the dual control equation.
Eigen::MatrixXd kalman_gain_continuous(const StateSpaceModel& model);

/// Combines plant, filter gain and feedback gain into the compensator. Pass
/// k_c = 0 to get a pure observer (A_f = A - K_f C).
RegulatorGains assemble_lqg(const StateSpaceModel& model,
                            const Eigen::MatrixXd& k_c,
                            const Eigen::MatrixXd& k_f);

/// Default execution period of the discrete regulator [s] (5 MHz).
inline constexpr double kDefaultExecPeriod = 200e-9;

/// Fills the discrete compensator matrices for execution period t_exec.
void discretize_regulator(RegulatorGains& gains,
                          double t_exec = kDefaultExecPeriod);

}  // namespace kicksense
