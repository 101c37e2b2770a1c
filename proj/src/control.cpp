#include "kicksense/control.hpp"

#include <numbers>

#include <unsupported/Eigen/MatrixFunctions>

#include "kicksense/errors.hpp"
#include "kicksense/lti.hpp"
#include "kicksense/riccati.hpp"

namespace kicksense {

CostWeights default_cost_weights(const StateSpaceModel& model, double n_u) {
  if (!(n_u > 0.0)) throw ValidationError("control.n_u: must be > 0");
  const int n = model.n();
  CostWeights w;
  w.m = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const StateLabel& label = model.state_labels.at(i);
    if (label.kind == StateLabel::Kind::disturbance) continue;
    const ModeParams& mode = model.modes.at(label.mode);
    const double omega = 2.0 * std::numbers::pi * mode.f_hz;
    w.m(i, i) = label.kind == StateLabel::Kind::position
                    ? mode.m_eff_kg * omega * omega  // stiffness k_eff
                    : mode.m_eff_kg;
  }
  w.n = Eigen::MatrixXd::Constant(1, 1, n_u);
  return w;
}

Eigen::MatrixXd lqr_gain(const StateSpaceModel& model, const CostWeights& w) {
  const RiccatiSolution sol = solve_care(model.A, model.B, w.m, w.n);
  return w.n.llt().solve(model.B.transpose() * sol.x);
}

Eigen::MatrixXd kalman_gain_continuous(const StateSpaceModel& model) {
  const RiccatiSolution sol =
      solve_care(model.A.transpose(), model.C.transpose(),
                 model.G * model.G.transpose(), model.R);
  return sol.x * model.C.transpose() * model.R.llt().solve(
             Eigen::MatrixXd::Identity(model.R.rows(), model.R.cols()));
}

RegulatorGains assemble_lqg(const StateSpaceModel& model,
                            const Eigen::MatrixXd& k_c,
                            const Eigen::MatrixXd& k_f) {
  const int n = model.n();
  if (k_c.rows() != model.B.cols() || k_c.cols() != n)
    throw ValidationError("assemble_lqg: K_c dimension mismatch");
  if (k_f.rows() != n || k_f.cols() != model.C.rows())
    throw ValidationError("assemble_lqg: K_f dimension mismatch");
  RegulatorGains g;
  g.k_c = k_c;
  g.k_f = k_f;
  g.a_f = model.A - k_f * model.C - model.B * k_c;

  // Plant driven by u = -K_c x_f next to the compensator tracking it. Gains
  // that pass the dimension checks can still destabilize this pair, so verify
  // the combined spectrum before handing the gains to a simulation. The
  // eigensolve needs balanced coordinates: the raw pair matrix reaches norms
  // near 1e12 and its non-normality smears weakly damped eigenvalues across
  // the imaginary axis (+10 rad/s observed on a pole whose true real part
  // is -23).
  Eigen::MatrixXd closed(2 * n, 2 * n);
  closed << model.A, -model.B * k_c, k_f * model.C, g.a_f;
  const Eigen::VectorXd scale = balance_scaling(closed);
  closed = scale.asDiagonal() * closed * scale.cwiseInverse().asDiagonal();
  if (closed.eigenvalues().real().maxCoeff() >= 0.0)
    throw NumericalError("assemble_lqg: closed loop is not stable");
  return g;
}

void discretize_regulator(RegulatorGains& gains, double t_exec) {
  if (!(t_exec > 0.0)) throw ValidationError("t_exec: must be > 0");
  if (gains.a_f.size() == 0)
    throw ValidationError("discretize_regulator: assemble_lqg first");
  gains.t_exec = t_exec;
  gains.a_df = (gains.a_f * t_exec).exp();
  const int n = static_cast<int>(gains.a_f.rows());
  gains.k_df = gains.a_f.partialPivLu().solve(
      (gains.a_df - Eigen::MatrixXd::Identity(n, n)) * gains.k_f);
  if (!gains.a_df.allFinite() || !gains.k_df.allFinite())
    throw NumericalError("discretize_regulator: non-finite result");
}

}  // namespace kicksense
