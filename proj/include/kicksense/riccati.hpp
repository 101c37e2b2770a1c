#pragma once

#include <Eigen/Dense>

namespace kicksense {

struct RiccatiSolution {
  Eigen::MatrixXd x;      ///< stabilizing solution, symmetric PSD
  long iterations = 0;
  double residual = 0.0;  ///< Frobenius norm of the equation residual
};

struct CareOptions {
  int max_iterations = 100;
  double residual_tol = 1e-10;  ///< accepted residual relative to ||M||
};

struct DareOptions {
  long max_iterations = 2000000;
  double change_tol = 1e-12;  ///< relative change per step at termination
};

/// Stabilizing solution of the continuous-time equation
///   0 = V A + A' V - V B N^-1 B' V + M
/// by Newton iteration on the gain, each step a Lyapunov solve. The seed gain
/// is zero when A is already Hurwitz, otherwise a Gramian-based stabilizing
/// gain; if that cannot be formed the equation is integrated to stationarity
/// instead. Requires N symmetric positive definite, M symmetric PSD, (A, B)
/// stabilizable.
RiccatiSolution solve_care(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const Eigen::MatrixXd& m, const Eigen::MatrixXd& n,
                           const CareOptions& opts = {});

/// Stationary a priori covariance of the discrete filter, found by iterating
///   S <- A_d S A_d' + Q_d - A_d S C'(C S C' + R_d)^-1 C S A_d'
/// to a fixed point. Deliberately the same recursion the filter runs, so the
/// stationary covariance and gains agree with a long filter run exactly.
RiccatiSolution dare_filter_fixed_point(const Eigen::MatrixXd& a_d,
                                        const Eigen::MatrixXd& c,
                                        const Eigen::MatrixXd& q_d,
                                        const Eigen::MatrixXd& r_d,
                                        const DareOptions& opts = {});

/// One explicit Euler step of the continuous filter covariance equation
///   dS/dt = A S + S A' + G G' - S C' R^-1 C S.
Eigen::MatrixXd riccati_ode_step(const Eigen::MatrixXd& sigma,
                                 const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& g,
                                 const Eigen::MatrixXd& c,
                                 const Eigen::MatrixXd& r, double dt);

/// Solves the continuous Lyapunov equation F X + X F' + Q = 0 for Hurwitz F
/// via complex Schur reduction and triangular back-substitution.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& f,
                               const Eigen::MatrixXd& q);

}  // namespace kicksense
