#pragma once

#include <Eigen/Dense>

#include "kicksense/model.hpp"

namespace kicksense {

/// Zero-order-hold discretization of a StateSpaceModel at sample time T_s:
///   x_{k+1} = A_d x_k + B_d u_k + w_k,  w_k ~ N(0, Q_d),
///   y_k = C x_k + v_k,                  v_k ~ N(0, R_d).
struct DiscreteModel {
  Eigen::MatrixXd A_d;
  Eigen::MatrixXd B_d;
  Eigen::MatrixXd Q_d;
  Eigen::MatrixXd C;
  Eigen::MatrixXd R_d;
  double t_s = 0.0;

  int n() const { return static_cast<int>(A_d.rows()); }
};

/// Exact discretization: A_d = exp(A T_s), B_d from the augmented exponential
/// of [[A, B], [0, 0]], Q_d by the block-exponential construction from
/// [[-A, G G'], [0, A']], R_d = R / T_s.
DiscreteModel discretize(const StateSpaceModel& model, double t_s);

/// Power-of-two diagonal similarity scales (Osborne balancing): D A D^-1 has
/// near-equal off-diagonal row and column norms. Eigenvalue and exponential
/// computations on stiff models should run in these coordinates; the factors
/// are exact, so the transform adds no rounding of its own.
Eigen::VectorXd balance_scaling(const Eigen::MatrixXd& a);

/// Rank of the observability matrix [C; CA; ...; CA^{n-1}], i.e. n minus the
/// dimension of the unobservable subspace. Full rank (== n) means observable.
/// Computed by an invariant-subspace recursion rather than by stacking the
/// powers, which stays reliable for stiff multi-resonance models.
int observability_rank(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c);

/// Rank of the controllability matrix [B, AB, ..., A^{n-1}B], the dimension
/// of the reachable subspace, computed by duality with observability_rank.
int controllability_rank(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Eigenvector (PBH) test: every eigenvalue with Re >= 0 must satisfy
/// rank([A - lambda I, B]) == n.
bool is_stabilizable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Solves the discrete Lyapunov equation P = F P F' + S for spectral radius
/// of F below one, by doubling of the geometric series.
Eigen::MatrixXd discrete_lyapunov(const Eigen::MatrixXd& f,
                                  const Eigen::MatrixXd& s);

}  // namespace kicksense
