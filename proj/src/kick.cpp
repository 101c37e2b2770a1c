#include "kicksense/kick.hpp"

#include <cmath>

#include "kicksense/errors.hpp"
#include "kicksense/lti.hpp"

namespace kicksense {

GaussianBelief inflate_covariance(const GaussianBelief& belief,
                                  const std::vector<StateLabel>& labels,
                                  const KickPrior& prior) {
  if (labels.size() != static_cast<std::size_t>(belief.cov.rows()))
    throw ValidationError("inflate_covariance: label/belief size mismatch");
  if ((prior.sigma_sq.array() < 0.0).any())
    throw ValidationError("inflate_covariance: prior variances must be >= 0");

  GaussianBelief out = belief;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].kind != StateLabel::Kind::velocity) continue;
    if (labels[i].mode >= prior.sigma_sq.size())
      throw ValidationError("inflate_covariance: prior shorter than mode count");
    out.cov(i, i) += prior.sigma_sq(labels[i].mode);
  }
  return out;
}

Eigen::MatrixXd kick_bound(const Eigen::MatrixXd& cov_pre,
                           const Eigen::MatrixXd& cov_post) {
  if (cov_pre.rows() != cov_post.rows() || cov_pre.cols() != cov_post.cols())
    throw ValidationError("kick_bound: dimension mismatch");
  const Eigen::MatrixXd sum = cov_pre + cov_post;
  return 0.5 * (sum + sum.transpose());
}

KickEstimate estimate_kick(const Trace& trace, const StateSpaceModel& model,
                           const DiscreteModel& dmodel, std::int64_t t_p_index,
                           const KickPrior& prior,
                           const GaussianBelief& initial) {
  const std::int64_t n = static_cast<std::int64_t>(trace.size());
  if (t_p_index <= 0 || t_p_index >= n)
    throw ValidationError("estimate_kick: t_p_index must lie inside the trace");
  if (prior.sigma_sq.size() < static_cast<Eigen::Index>(model.modes.size()))
    throw ValidationError("estimate_kick: prior shorter than mode count");

  // Both passes run in coordinates where each state is divided by its
  // stationary standard deviation. In raw SI units the covariances involved
  // span position variances near 1e-22 m^2 up to the inflated velocity prior
  // near 1e-3 m^2/s^2, and at that spread the smoother's gain solve at the
  // post-segment edge loses the small slots: the reported bound roughly
  // doubles and the estimate itself shifts. Slots the process noise never
  // excites keep unit scale; they are decoupled and identically zero anyway.
  Eigen::VectorXd scale = discrete_lyapunov(dmodel.A_d, dmodel.Q_d).diagonal();
  for (Eigen::Index i = 0; i < scale.size(); ++i)
    scale(i) = scale(i) > 0.0 ? std::sqrt(scale(i)) : 1.0;
  const Eigen::VectorXd unscale = scale.cwiseInverse();

  DiscreteModel scaled = dmodel;
  scaled.A_d = unscale.asDiagonal() * dmodel.A_d * scale.asDiagonal();
  scaled.B_d = unscale.asDiagonal() * dmodel.B_d;
  scaled.Q_d = unscale.asDiagonal() * dmodel.Q_d * unscale.asDiagonal();
  scaled.C = dmodel.C * scale.asDiagonal();

  GaussianBelief start = initial;
  start.x = unscale.asDiagonal() * initial.x;
  start.cov = unscale.asDiagonal() * initial.cov * unscale.asDiagonal();

  KickPrior scaled_prior = prior;
  for (std::size_t i = 0; i < model.state_labels.size(); ++i) {
    const StateLabel& label = model.state_labels[i];
    if (label.kind == StateLabel::Kind::velocity &&
        label.mode < scaled_prior.sigma_sq.size())
      scaled_prior.sigma_sq(label.mode) /= scale(i) * scale(i);
  }

  // Pre segment: predictor pass over samples [0, t_p). Its final belief is
  // the prediction for sample t_p, conditioned on data strictly before t_p.
  Trace pre;
  pre.t_s = trace.t_s;
  pre.y.assign(trace.y.begin(), trace.y.begin() + t_p_index);
  pre.u.assign(trace.u.begin(), trace.u.begin() + t_p_index);
  const FilterRun fwd_pre =
      kf_run(pre, scaled, start, BeliefStorage::innovations_only);
  const GaussianBelief& at_kick_pre = fwd_pre.final_belief;

  // Post segment: the same prediction with the velocity slots de-weighted by
  // the kick prior, filtered over [t_p, N) and smoothed back to t_p.
  Trace post;
  post.t_s = trace.t_s;
  post.y.assign(trace.y.begin() + t_p_index, trace.y.end());
  post.u.assign(trace.u.begin() + t_p_index, trace.u.end());
  const GaussianBelief inflated =
      inflate_covariance(at_kick_pre, model.state_labels, scaled_prior);
  const FilterRun fwd_post = kf_run(post, scaled, inflated, BeliefStorage::full);
  const std::vector<GaussianBelief> smoothed =
      rts_run(fwd_post.beliefs, post.u, scaled);
  const GaussianBelief& at_kick_post = smoothed.front();

  KickEstimate est;
  est.t_p_index = t_p_index;
  est.t_p = static_cast<double>(t_p_index) * trace.t_s;
  est.delta_x = scale.asDiagonal() * (at_kick_post.x - at_kick_pre.x);
  est.cov_bound = scale.asDiagonal() *
                  kick_bound(at_kick_pre.cov, at_kick_post.cov) *
                  scale.asDiagonal();
  est.stationarity_warning =
      fwd_pre.final_cov_change > 1e-6 || fwd_post.final_cov_change > 1e-6;

  const int modes = static_cast<int>(model.modes.size());
  est.modal_momentum.resize(modes);
  for (std::size_t i = 0; i < model.state_labels.size(); ++i) {
    const StateLabel& label = model.state_labels[i];
    if (label.kind == StateLabel::Kind::velocity)
      est.modal_momentum(label.mode) =
          model.modes[label.mode].m_eff_kg * est.delta_x(i);
  }
  return est;
}

}  // namespace kicksense
