#include "kicksense/estimation.hpp"

#include <cmath>

#include "kicksense/errors.hpp"
#include "kicksense/riccati.hpp"

namespace kicksense {

namespace {

void check_belief(const GaussianBelief& b, const DiscreteModel& model,
                  const char* who) {
  const int n = model.n();
  if (b.x.size() != n || b.cov.rows() != n || b.cov.cols() != n)
    throw ValidationError(std::string(who) + ": belief dimension mismatch");
  if (!b.x.allFinite() || !b.cov.allFinite())
    throw ValidationError(std::string(who) + ": belief has non-finite entries");
  if ((b.cov - b.cov.transpose()).norm() >
      1e-9 * std::max(1.0, b.cov.norm()))
    throw ValidationError(std::string(who) + ": belief covariance not symmetric");
}

/// Inverts a symmetric PSD matrix through LDLT, adding one round of diagonal
/// jitter when the factorization finds it singular. A second failure aborts.
Eigen::MatrixXd psd_solve(const Eigen::MatrixXd& m, const Eigen::MatrixXd& rhs,
                          const char* who) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  const double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
  const double dmin = ldlt.vectorD().minCoeff();
  if (ldlt.info() == Eigen::Success && dmin > 1e3 * 1e-16 * dmax)
    return ldlt.solve(rhs);

  Eigen::MatrixXd jittered = m;
  jittered.diagonal().array() += 1e-14 * std::max(m.trace(), 1e-300);
  ldlt.compute(jittered);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
    throw NumericalError(std::string(who) +
                         ": matrix not positive definite even after jitter");
  return ldlt.solve(rhs);
}

}  // namespace

KalmanStepResult kf_step(const GaussianBelief& belief, double y, double u,
                         const DiscreteModel& model) {
  check_belief(belief, model, "kf_step");
  const Eigen::MatrixXd cs = model.C * belief.cov;  // 1 x n
  const double innov_var = (cs * model.C.transpose())(0, 0) + model.R_d(0, 0);
  if (!(innov_var > 0.0))
    throw NumericalError("kf_step: innovation variance not positive");
  const Eigen::VectorXd gain =
      model.A_d * cs.transpose() / innov_var;  // n x 1

  const double innovation = y - (model.C * belief.x)(0);

  KalmanStepResult out;
  out.innovation = innovation;
  out.innovation_var = innov_var;
  out.next.t = belief.t + model.t_s;
  out.next.x = model.A_d * belief.x + model.B_d.col(0) * u + gain * innovation;
  const Eigen::MatrixXd cov =
      model.A_d * belief.cov * model.A_d.transpose() + model.Q_d -
      gain * (cs * model.A_d.transpose());
  out.next.cov = 0.5 * (cov + cov.transpose());
  return out;
}

FilterRun kf_run(const Trace& trace, const DiscreteModel& model,
                 const GaussianBelief& initial, BeliefStorage storage) {
  check_belief(initial, model, "kf_run");
  if (trace.y.size() != trace.u.size())
    throw ValidationError("kf_run: trace y and u lengths differ");

  const std::size_t n_samples = trace.size();
  FilterRun run;
  run.innovations.reserve(n_samples);
  run.innovation_vars.reserve(n_samples);
  if (storage == BeliefStorage::full) run.beliefs.reserve(n_samples + 1);

  GaussianBelief belief = initial;
  double prev_cov_norm = belief.cov.norm();
  for (std::size_t k = 0; k < n_samples; ++k) {
    if (storage == BeliefStorage::full) run.beliefs.push_back(belief);
    KalmanStepResult step = kf_step(belief, trace.y[k], trace.u[k], model);
    run.innovations.push_back(step.innovation);
    run.innovation_vars.push_back(step.innovation_var);
    run.final_cov_change = (step.next.cov - belief.cov).norm() /
                           std::max(prev_cov_norm, 1e-300);
    prev_cov_norm = step.next.cov.norm();
    belief = std::move(step.next);
  }
  if (storage == BeliefStorage::full) run.beliefs.push_back(belief);
  run.final_belief = std::move(belief);
  return run;
}

std::vector<GaussianBelief> rts_run(const std::vector<GaussianBelief>& forward,
                                    std::span<const double> inputs,
                                    const DiscreteModel& model) {
  if (forward.empty()) return {};
  if (inputs.size() + 1 < forward.size())
    throw ValidationError("rts_run: need one input per transition");
  const std::size_t last = forward.size() - 1;

  std::vector<GaussianBelief> smoothed(forward.size());
  smoothed[last] = forward[last];

  for (std::size_t k = last; k-- > 0;) {
    const GaussianBelief& fwd = forward[k];
    const Eigen::MatrixXd pred_cov =
        model.A_d * fwd.cov * model.A_d.transpose() + model.Q_d;
    // G = S A_d' P^-1, computed as a PSD solve against (A_d S)'.
    const Eigen::MatrixXd gain =
        psd_solve(pred_cov, model.A_d * fwd.cov, "rts_run").transpose();

    const Eigen::VectorXd pred_x =
        model.A_d * fwd.x + model.B_d.col(0) * inputs[k];
    smoothed[k].t = fwd.t;
    smoothed[k].x = fwd.x + gain * (smoothed[k + 1].x - pred_x);
    const Eigen::MatrixXd cov =
        fwd.cov +
        gain * (smoothed[k + 1].cov - pred_cov) * gain.transpose();
    smoothed[k].cov = 0.5 * (cov + cov.transpose());
  }
  return smoothed;
}

SteadyStateGains steady_state_gains(const DiscreteModel& model) {
  const RiccatiSolution sol =
      dare_filter_fixed_point(model.A_d, model.C, model.Q_d, model.R_d);
  SteadyStateGains g;
  g.covariance = sol.x;
  const Eigen::MatrixXd cs = model.C * sol.x;
  const Eigen::MatrixXd innov = cs * model.C.transpose() + model.R_d;
  g.kalman_gain = model.A_d * innov.ldlt().solve(cs).transpose();
  return g;
}

}  // namespace kicksense
