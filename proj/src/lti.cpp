#include "kicksense/lti.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "kicksense/errors.hpp"

namespace kicksense {

namespace {

int svd_rank_complex(const Eigen::MatrixXcd& m) {
  const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  const auto& sv = svd.singularValues();
  const double tol = std::max(m.rows(), m.cols()) *
                     std::numeric_limits<double>::epsilon() * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  return rank;
}

}  // namespace

// Coordinate descent equalizing the off-diagonal row and column norms of
// D A D^-1. Matrices mixing position and velocity states have entries
// spanning many decades (1 vs Omega^2); without this the exponential's
// squaring phase and the eigensolver lose most of their accuracy.
Eigen::VectorXd balance_scaling(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  for (int sweep = 0; sweep < 50; ++sweep) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      double c = 0.0, r = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(a(j, i)) * d(j);
        r += std::abs(a(i, j)) / d(j);
      }
      if (c == 0.0 || r == 0.0) continue;
      const double f = std::exp2(std::round(0.5 * std::log2(c / r)));
      if (f != d(i)) {
        d(i) = f;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return d;
}

namespace {

// Dimension of the largest A-invariant subspace inside ker(C), by the
// subspace recursion N_{k+1} = {x in N_k : A x in N_k} on orthonormal bases.
// The observability rank is n minus this dimension. Stacking the powers
// C A^k and ranking the result is hopeless for stiff multi-resonance models:
// the singular values of that matrix span more decades than a double holds
// (observed ~1e-18 relative on a ten-state model whose true rank is full).
// Here every rank decision involves just one application of A, so the
// conditioning is that of A itself. The matrix is balanced first (subspace
// dimensions are similarity invariant) to keep the per-step noise floor
// eps * ||A|| well below the weakest genuine coupling.
int unobservable_dimension(const Eigen::MatrixXd& a_raw,
                           const Eigen::MatrixXd& c_raw) {
  const int n = static_cast<int>(a_raw.rows());
  const Eigen::VectorXd scale = balance_scaling(a_raw);
  const Eigen::VectorXd unscale = scale.cwiseInverse();
  const Eigen::MatrixXd a = scale.asDiagonal() * a_raw * unscale.asDiagonal();
  const Eigen::MatrixXd c = c_raw * unscale.asDiagonal();
  const auto kernel_dim = [](const Eigen::JacobiSVD<Eigen::MatrixXd>& svd,
                             long rows, long cols, double tol) {
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > tol) ++rank;
    return static_cast<int>(cols) - rank;
  };
  const double eps = std::numeric_limits<double>::epsilon();

  const Eigen::JacobiSVD<Eigen::MatrixXd> csvd(c, Eigen::ComputeFullV);
  const double sv_c = csvd.singularValues().size() > 0
                          ? csvd.singularValues()(0)
                          : 0.0;
  int p = kernel_dim(csvd, c.rows(), c.cols(),
                     std::max(c.rows(), c.cols()) * eps * sv_c);
  if (p == 0) return 0;
  Eigen::MatrixXd v = csvd.matrixV().rightCols(p);

  // Rounding noise in W stems from the basis carried across steps and is
  // amplified by applications of A, so the kernel tolerance gets a floor at
  // the scale of ||A|| with headroom for the accumulation. Couplings below
  // that floor are numerically invisible anyway.
  const double a_norm = a.norm();

  // p decreases strictly until the subspace is invariant, so n steps suffice.
  for (int iter = 0; iter < n; ++iter) {
    const Eigen::MatrixXd av = a * v;
    const Eigen::MatrixXd w = av - v * (v.transpose() * av);
    const Eigen::JacobiSVD<Eigen::MatrixXd> wsvd(w, Eigen::ComputeFullV);
    const double sv_w =
        wsvd.singularValues().size() > 0 ? wsvd.singularValues()(0) : 0.0;
    const double tol = 64.0 * std::max(w.rows(), w.cols()) * eps *
                       std::max(sv_w, a_norm);
    const int q = kernel_dim(wsvd, w.rows(), w.cols(), tol);
    if (q == 0) return 0;
    if (q == p) return p;
    v = v * wsvd.matrixV().rightCols(q);
    p = q;
  }
  return p;
}

}  // namespace

DiscreteModel discretize(const StateSpaceModel& model, double t_s) {
  if (!(t_s > 0.0)) throw ValidationError("t_s: must be > 0");
  const int n = model.n();
  const int l = static_cast<int>(model.B.cols());

  DiscreteModel d;
  d.t_s = t_s;
  d.C = model.C;
  d.R_d = model.R / t_s;

  // Work in balanced coordinates x' = D x and map the results back; the
  // scaling is exact, and it keeps the exponential arguments near unit norm.
  const Eigen::VectorXd scale = balance_scaling(model.A);
  const Eigen::VectorXd unscale = scale.cwiseInverse();
  const Eigen::MatrixXd a_s =
      scale.asDiagonal() * model.A * unscale.asDiagonal();
  const Eigen::MatrixXd b_s = scale.asDiagonal() * model.B;
  const Eigen::MatrixXd g_s = scale.asDiagonal() * model.G;

  // A_d and B_d from one augmented exponential.
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + l, n + l);
  aug.topLeftCorner(n, n) = a_s * t_s;
  aug.topRightCorner(n, l) = b_s * t_s;
  const Eigen::MatrixXd aug_exp = aug.exp();
  d.A_d = unscale.asDiagonal() * aug_exp.topLeftCorner(n, n) *
          scale.asDiagonal();
  d.B_d = unscale.asDiagonal() * aug_exp.topRightCorner(n, l);

  // Q_d = integral over [0, T_s] of exp(A tau) G G' exp(A' tau) dtau, read off
  // the exponential of [[-A, GG'], [0, A']]: the lower-right block is A_d' and
  // the upper-right block is A_d^-1 Q_d.
  Eigen::MatrixXd van = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  van.topLeftCorner(n, n) = -a_s * t_s;
  van.topRightCorner(n, n) = g_s * g_s.transpose() * t_s;
  van.bottomRightCorner(n, n) = a_s.transpose() * t_s;
  const Eigen::MatrixXd van_exp = van.exp();
  const Eigen::MatrixXd q_raw =
      unscale.asDiagonal() *
      (van_exp.bottomRightCorner(n, n).transpose() *
       van_exp.topRightCorner(n, n)) *
      unscale.asDiagonal();
  d.Q_d = 0.5 * (q_raw + q_raw.transpose());

  if (!d.A_d.allFinite() || !d.B_d.allFinite() || !d.Q_d.allFinite())
    throw NumericalError("discretize: matrix exponential produced non-finite values");
  return d;
}

int observability_rank(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n || c.cols() != n)
    throw ValidationError("observability_rank: dimension mismatch");
  return n - unobservable_dimension(a, c);
}

int controllability_rank(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n || b.rows() != n)
    throw ValidationError("controllability_rank: dimension mismatch");
  // Reachable and observable subspaces are dual pairs.
  return n - unobservable_dimension(a.transpose(), b.transpose());
}

bool is_stabilizable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n || b.rows() != n)
    throw ValidationError("is_stabilizable: dimension mismatch");
  const Eigen::EigenSolver<Eigen::MatrixXd> eig(a);
  for (int i = 0; i < n; ++i) {
    const std::complex<double> lambda = eig.eigenvalues()(i);
    if (lambda.real() < 0.0) continue;
    Eigen::MatrixXcd pencil(n, n + b.cols());
    pencil.leftCols(n) = a.cast<std::complex<double>>();
    pencil.leftCols(n).diagonal().array() -= lambda;
    pencil.rightCols(b.cols()) = b.cast<std::complex<double>>();
    // Row equilibration, again rank preserving.
    for (int r = 0; r < n; ++r) {
      const double s = pencil.row(r).norm();
      if (s > 0.0) pencil.row(r) /= s;
    }
    if (svd_rank_complex(pencil) < n) return false;
  }
  return true;
}

Eigen::MatrixXd discrete_lyapunov(const Eigen::MatrixXd& f,
                                  const Eigen::MatrixXd& s) {
  const int n = static_cast<int>(f.rows());
  if (f.cols() != n || s.rows() != n || s.cols() != n)
    throw ValidationError("discrete_lyapunov: dimension mismatch");
  Eigen::MatrixXd p = s;
  Eigen::MatrixXd fk = f;
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::MatrixXd next = p + fk * p * fk.transpose();
    // stableNorm: plain norm() overflows to inf once entries pass ~1e154,
    // which would make the convergence test compare inf <= inf and return a
    // garbage solution for expanding F.
    const double change = (next - p).stableNorm();
    p = next;
    fk = fk * fk;
    if (!p.allFinite())
      throw NumericalError("discrete_lyapunov: diverged (is rho(F) < 1?)");
    if (change <= 1e-15 * std::max(1.0, p.stableNorm())) {
      return 0.5 * (p + p.transpose());
    }
  }
  throw NumericalError("discrete_lyapunov: no convergence in 200 doublings");
}

}  // namespace kicksense
