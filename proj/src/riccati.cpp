#include "kicksense/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "kicksense/errors.hpp"
#include "kicksense/lti.hpp"

namespace kicksense {

namespace {

bool is_symmetric(const Eigen::MatrixXd& m) {
  return (m - m.transpose()).norm() <= 1e-12 * std::max(1.0, m.norm());
}

bool is_hurwitz(const Eigen::MatrixXd& a) {
  const Eigen::EigenSolver<Eigen::MatrixXd> eig(a);
  return (eig.eigenvalues().real().array() < 0.0).all();
}

double care_residual_norm(const Eigen::MatrixXd& a, const Eigen::MatrixXd& s,
                          const Eigen::MatrixXd& m, const Eigen::MatrixXd& v) {
  // s = B N^-1 B'
  return (v * a + a.transpose() * v - v * s * v + m).norm();
}

// Diagonal scaling x~ = D x for the data triple (A, S, M). Physical designs
// pair stiff drift entries with tiny modal weights, spreading the triple over
// thirty decades; coordinate-descent balancing pulls the transformed rows and
// columns onto a common magnitude so the Newton steps stay well conditioned.
// Power-of-two factors make the transform exact. Under D the blocks move as
// A -> DAD^-1, S -> DSD, M -> D^-1 M D^-1, and the solution returns as DVD.
Eigen::VectorXd care_scaling(const Eigen::MatrixXd& a, const Eigen::MatrixXd& s,
                             const Eigen::MatrixXd& m) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  for (int sweep = 0; sweep < 50; ++sweep) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      // Entries that grow with d(i) against entries that shrink with it.
      double up = 0.0;
      double down = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i) {
          up += std::abs(a(i, j)) * d(i) / d(j);
          down += std::abs(a(j, i)) * d(j) / d(i);
        }
        up += std::abs(s(i, j)) * d(i) * d(j);
        down += std::abs(m(i, j)) / (d(i) * d(j));
      }
      if (!(up > 0.0) || !(down > 0.0)) continue;
      const double cur = std::log2(d(i));
      const double e =
          std::clamp(cur + std::round(0.5 * std::log2(down / up)), -120.0,
                     120.0) -
          cur;
      if (e != 0.0) {
        d(i) *= std::exp2(e);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return d;
}

// Fallback for seeds the Gramian construction cannot produce: explicit Euler
// on dV/dt = A'V + VA - VSV + M until stationary.
Eigen::MatrixXd integrate_care(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& s,
                               const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(a.rows());
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, n);
  const double a_norm = a.norm();
  for (long iter = 0; iter < 50000000L; ++iter) {
    const Eigen::MatrixXd dv =
        a.transpose() * v + v * a - v * s * v + m;
    const double dt = 0.25 / (a_norm + (s * v).norm() + 1.0);
    v += dt * dv;
    v = 0.5 * (v + v.transpose()).eval();
    if (!v.allFinite())
      throw NumericalError("solve_care: fallback integration diverged");
    if (dv.norm() <= 1e-13 * std::max(1.0, v.norm())) return v;
  }
  throw NumericalError("solve_care: fallback integration did not converge");
}

}  // namespace

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& f,
                               const Eigen::MatrixXd& q) {
  const int n = static_cast<int>(f.rows());
  if (f.cols() != n || q.rows() != n || q.cols() != n)
    throw ValidationError("solve_lyapunov: dimension mismatch");

  const Eigen::ComplexSchur<Eigen::MatrixXd> schur(f);
  if (schur.info() != Eigen::Success)
    throw NumericalError("solve_lyapunov: Schur decomposition failed");
  const Eigen::MatrixXcd& t = schur.matrixT();
  const Eigen::MatrixXcd& u = schur.matrixU();

  const Eigen::MatrixXcd q_t = u.adjoint() * q.cast<std::complex<double>>() * u;
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);

  // Solve T Y + Y T^H = -Q_t column by column from the right. Column j only
  // couples to columns k > j through conj(T(j, k)).
  for (int j = n - 1; j >= 0; --j) {
    Eigen::VectorXcd rhs = -q_t.col(j);
    for (int k = j + 1; k < n; ++k) rhs -= std::conj(t(j, k)) * y.col(k);
    Eigen::MatrixXcd lhs = t;
    lhs.diagonal().array() += std::conj(t(j, j));
    if (std::abs(lhs(j, j)) < 1e-300)
      throw NumericalError(
          "solve_lyapunov: singular pencil (eigenvalue pair on the axis?)");
    y.col(j) = lhs.triangularView<Eigen::Upper>().solve(rhs);
  }

  const Eigen::MatrixXd x = (u * y * u.adjoint()).real();
  return 0.5 * (x + x.transpose());
}

RiccatiSolution solve_care(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const Eigen::MatrixXd& m, const Eigen::MatrixXd& n,
                           const CareOptions& opts) {
  const int dim = static_cast<int>(a.rows());
  if (a.cols() != dim || b.rows() != dim || m.rows() != dim || m.cols() != dim ||
      n.rows() != b.cols() || n.cols() != b.cols())
    throw ValidationError("solve_care: dimension mismatch");
  if (!is_symmetric(m)) throw ValidationError("solve_care: M must be symmetric");
  if (!is_symmetric(n)) throw ValidationError("solve_care: N must be symmetric");

  const Eigen::LLT<Eigen::MatrixXd> n_llt(n);
  if (n_llt.info() != Eigen::Success)
    throw ValidationError("solve_care: N must be positive definite");
  {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> meig(m);
    if (meig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, m.norm()))
      throw ValidationError("solve_care: M must be positive semidefinite");
  }
  if (!is_stabilizable(a, b))
    throw ValidationError("solve_care: (A, B) is not stabilizable");

  // Solve in balanced coordinates and map the result back at the end.
  const Eigen::VectorXd d =
      care_scaling(a, b * n_llt.solve(b.transpose()), m);
  const Eigen::VectorXd d_inv = d.cwiseInverse();
  const Eigen::MatrixXd a_s = d.asDiagonal() * a * d_inv.asDiagonal();
  const Eigen::MatrixXd b_s = d.asDiagonal() * b;
  const Eigen::MatrixXd m_s = d_inv.asDiagonal() * m * d_inv.asDiagonal();
  const Eigen::MatrixXd s = b_s * n_llt.solve(b_s.transpose());

  // Seed gain. Zero works when A is Hurwitz; otherwise build a stabilizing
  // gain from the shifted controllability Gramian (Bass construction), and if
  // that Gramian is singular fall back to direct integration.
  Eigen::MatrixXd k(b.cols(), dim);
  bool have_seed = false;
  if (is_hurwitz(a_s)) {
    k.setZero();
    have_seed = true;
  } else {
    const double beta = 1.1 * a_s.norm() + 1.0;
    Eigen::MatrixXd shifted = -a_s;
    shifted.diagonal().array() -= beta;
    const Eigen::MatrixXd gram =
        solve_lyapunov(shifted, 2.0 * b_s * b_s.transpose());
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (lu.isInvertible()) {
      k = n_llt.solve(b_s.transpose() * lu.inverse());
      have_seed = is_hurwitz(a_s - b_s * k);
    }
  }

  RiccatiSolution sol;
  if (!have_seed) {
    sol.x = integrate_care(a_s, s, m_s);
    sol.residual = care_residual_norm(a_s, s, m_s, sol.x);
    sol.x = d.asDiagonal() * sol.x * d.asDiagonal();
    return sol;
  }

  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(dim, dim);
  const double m_norm = m_s.norm();
  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    const Eigen::MatrixXd f = (a_s - b_s * k).transpose();
    const Eigen::MatrixXd v_next =
        solve_lyapunov(f, m_s + k.transpose() * n * k);
    const double change = (v_next - v).norm();
    v = v_next;
    k = n_llt.solve(b_s.transpose() * v);
    sol.iterations = iter;
    sol.residual = care_residual_norm(a_s, s, m_s, v);
    // Attainable floor: rounding in the residual terms themselves. The change
    // test is relative to ||V||; an absolute floor there would cut iteration
    // short for physically tiny covariances (norms ~1e-9 and below).
    const double floor =
        1e-14 * ((v * a_s).norm() + (v * s * v).norm() + m_norm);
    if (sol.residual <= std::max(opts.residual_tol * m_norm, floor) ||
        change <= 1e-13 * v.norm()) {
      sol.x = 0.5 * (v + v.transpose());
      sol.x = d.asDiagonal() * sol.x * d.asDiagonal();
      return sol;
    }
  }
  throw NumericalError("solve_care: Newton iteration did not converge in " +
                       std::to_string(opts.max_iterations) + " steps");
}

RiccatiSolution dare_filter_fixed_point(const Eigen::MatrixXd& a_d,
                                        const Eigen::MatrixXd& c,
                                        const Eigen::MatrixXd& q_d,
                                        const Eigen::MatrixXd& r_d,
                                        const DareOptions& opts) {
  const int n = static_cast<int>(a_d.rows());
  if (a_d.cols() != n || c.cols() != n || q_d.rows() != n || q_d.cols() != n ||
      r_d.rows() != c.rows() || r_d.cols() != c.rows())
    throw ValidationError("dare_filter_fixed_point: dimension mismatch");

  RiccatiSolution sol;
  Eigen::MatrixXd sigma = q_d;
  for (long iter = 1; iter <= opts.max_iterations; ++iter) {
    const Eigen::MatrixXd cs = c * sigma;
    const Eigen::MatrixXd innov = cs * c.transpose() + r_d;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(innov);
    if (ldlt.info() != Eigen::Success)
      throw NumericalError("dare_filter_fixed_point: innovation matrix not PSD");
    const Eigen::MatrixXd k = a_d * ldlt.solve(cs).transpose();
    const Eigen::MatrixXd next =
        a_d * sigma * a_d.transpose() + q_d - k * (cs * a_d.transpose());
    const double change = (next - sigma).norm();
    sigma = 0.5 * (next + next.transpose());
    if (!sigma.allFinite())
      throw NumericalError("dare_filter_fixed_point: iteration diverged");
    sol.iterations = iter;
    sol.residual = change / std::max(1e-300, sigma.norm());
    if (sol.residual < opts.change_tol) {
      sol.x = sigma;
      return sol;
    }
  }
  throw NumericalError(
      "dare_filter_fixed_point: no fixed point within iteration limit");
}

Eigen::MatrixXd riccati_ode_step(const Eigen::MatrixXd& sigma,
                                 const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& g,
                                 const Eigen::MatrixXd& c,
                                 const Eigen::MatrixXd& r, double dt) {
  const Eigen::LDLT<Eigen::MatrixXd> r_ldlt(r);
  if (r_ldlt.info() != Eigen::Success)
    throw ValidationError("riccati_ode_step: R must be positive definite");
  const Eigen::MatrixXd dsigma = a * sigma + sigma * a.transpose() +
                                 g * g.transpose() -
                                 sigma * c.transpose() *
                                     r_ldlt.solve(c * sigma);
  const Eigen::MatrixXd next = sigma + dt * dsigma;
  return 0.5 * (next + next.transpose());
}

}  // namespace kicksense
