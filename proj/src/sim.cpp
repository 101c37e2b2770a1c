#include "kicksense/sim.hpp"

#include <cmath>
#include <random>

#include <omp.h>

#include "kicksense/errors.hpp"

namespace kicksense {

namespace {

/// splitmix64 output function, used to derive decorrelated engine seeds.
std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Factor F with F F' = P for symmetric PSD P, tolerating zero eigenvalues.
/// Columns belonging to (numerically) zero eigenvalues are dropped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& p, const char* who) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p);
  if (eig.info() != Eigen::Success)
    throw NumericalError(std::string(who) + ": eigendecomposition failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double lmax = std::max(lambda.cwiseAbs().maxCoeff(), 0.0);
  if (lambda.minCoeff() < -1e-10 * std::max(lmax, 1e-300))
    throw NumericalError(std::string(who) + ": matrix is not PSD");
  const int n = static_cast<int>(p.rows());
  Eigen::MatrixXd f(n, n);
  int cols = 0;
  for (int i = 0; i < n; ++i) {
    if (lambda(i) <= 0.0) continue;
    f.col(cols++) = eig.eigenvectors().col(i) * std::sqrt(lambda(i));
  }
  return f.leftCols(cols);
}

Eigen::VectorXd kick_jump(const StateSpaceModel& model, const KickEvent& kick) {
  const int n_modes = static_cast<int>(model.modes.size());
  Eigen::VectorXd weights;
  if (kick.mode_weights.size() == 0) {
    weights = Eigen::VectorXd::Zero(n_modes);
    weights(0) = 1.0;
  } else if (kick.mode_weights.size() == n_modes) {
    weights = kick.mode_weights;
  } else {
    throw ValidationError("kick: mode_weights length must equal mode count");
  }
  Eigen::VectorXd jump = Eigen::VectorXd::Zero(model.n());
  for (std::size_t i = 0; i < model.state_labels.size(); ++i) {
    const StateLabel& label = model.state_labels[i];
    if (label.kind == StateLabel::Kind::velocity)
      jump(i) = weights(label.mode) * kick.momentum /
                model.modes[label.mode].m_eff_kg;
  }
  return jump;
}

}  // namespace

SimResult simulate(const SimConfig& config) {
  if (config.n_samples < 0)
    throw ValidationError("sim.n_samples: must be >= 0");
  if (!(config.t_s > 0.0)) throw ValidationError("sim.t_s: must be > 0");
  const int n = config.model.n();

  // Sub-step count: regulator execution may run faster than the sample rate.
  int substeps = 1;
  if (config.regulator) {
    const RegulatorGains& reg = *config.regulator;
    if (reg.a_df.rows() != n || reg.k_df.rows() != n || reg.k_c.cols() != n)
      throw ValidationError("sim: regulator dimensions do not match the model");
    if (!(reg.t_exec > 0.0))
      throw ValidationError("sim: regulator not discretized (t_exec unset)");
    const double ratio = config.t_s / reg.t_exec;
    substeps = static_cast<int>(std::lround(ratio));
    if (substeps < 1 || std::abs(ratio - substeps) > 1e-9 * ratio)
      throw ValidationError(
          "sim: t_s must be an integer multiple of the regulator t_exec");
  }
  const double dt = config.t_s / substeps;
  const DiscreteModel d = discretize(config.model, dt);

  for (const KickEvent& kick : config.kicks)
    if (kick.sample_index < 0 || kick.sample_index >= config.n_samples)
      throw ValidationError("kick: sample_index outside the trace");

  const Eigen::MatrixXd noise_factor = psd_sqrt(d.Q_d, "sim process noise");
  const double meas_sigma = std::sqrt(d.R_d(0, 0));

  std::mt19937_64 rng(mix_seed(config.seed));
  std::normal_distribution<double> normal;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (config.initial_state) {
    if (config.initial_state->size() != n)
      throw ValidationError("sim.initial_state: wrong length");
    x = *config.initial_state;
  } else if (config.stationary_start) {
    // Stationary law of the free plant at the recording rate.
    const DiscreteModel coarse =
        substeps == 1 ? d : discretize(config.model, config.t_s);
    const Eigen::MatrixXd p_stat = discrete_lyapunov(coarse.A_d, coarse.Q_d);
    const Eigen::MatrixXd f = psd_sqrt(p_stat, "sim stationary start");
    Eigen::VectorXd xi(f.cols());
    for (int i = 0; i < xi.size(); ++i) xi(i) = normal(rng);
    x = f * xi;
  }

  Eigen::VectorXd x_reg = Eigen::VectorXd::Zero(n);

  SimResult result;
  result.trace.t_s = config.t_s;
  result.trace.y.resize(config.n_samples);
  result.trace.u.resize(config.n_samples);
  if (config.record_states) result.states.resize(n, config.n_samples);

  Eigen::VectorXd xi(noise_factor.cols());
  Eigen::VectorXd x_next(n);
  for (std::int64_t k = 0; k < config.n_samples; ++k) {
    for (const KickEvent& kick : config.kicks)
      if (kick.sample_index == k) x += kick_jump(config.model, kick);

    if (config.record_states) result.states.col(k) = x;

    double y_acc = 0.0;
    double u_rec = 0.0;
    for (int j = 0; j < substeps; ++j) {
      const double y_fine = (d.C * x)(0) + meas_sigma * normal(rng);
      y_acc += y_fine;
      double u = 0.0;
      if (config.regulator) {
        u = -(config.regulator->k_c * x_reg)(0);
        x_reg = (config.regulator->a_df * x_reg +
                 config.regulator->k_df.col(0) * y_fine)
                    .eval();
      }
      if (j == 0) u_rec = u;

      for (int i = 0; i < xi.size(); ++i) xi(i) = normal(rng);
      x_next.noalias() = d.A_d * x;
      x_next.noalias() += d.B_d.col(0) * u;
      x_next.noalias() += noise_factor * xi;
      x.swap(x_next);
    }
    result.trace.y[k] = y_acc / substeps;
    result.trace.u[k] = u_rec;
  }
  return result;
}

std::vector<TrialResult> run_montecarlo(const SimConfig& config,
                                        const std::vector<double>& magnitudes,
                                        int trials_per_magnitude,
                                        const KickPrior& prior, int threads) {
  if (config.kicks.size() != 1)
    throw ValidationError("run_montecarlo: config must have exactly one kick");
  if (trials_per_magnitude < 1)
    throw ValidationError("run_montecarlo: trials_per_magnitude must be >= 1");
  if (magnitudes.empty())
    throw ValidationError("run_montecarlo: no magnitudes given");

  // Shared across trials: the estimation model and the initial belief. The
  // belief must match how the trials actually start (zero mean, free-plant
  // stationary law); a tighter prior leaves each filter overconfident about
  // x0 and the unforgotten error miscalibrates the reported bounds.
  const DiscreteModel d = discretize(config.model, config.t_s);
  GaussianBelief initial;
  initial.t = 0.0;
  initial.x = Eigen::VectorXd::Zero(config.model.n());
  initial.cov = discrete_lyapunov(d.A_d, d.Q_d);

  const std::int64_t total =
      static_cast<std::int64_t>(magnitudes.size()) * trials_per_magnitude;
  std::vector<TrialResult> results(total);

  const int num_threads = threads > 0 ? threads : omp_get_max_threads();
  std::exception_ptr failure = nullptr;

#pragma omp parallel for schedule(dynamic) num_threads(num_threads)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    try {
      const std::size_t mag_index = idx / trials_per_magnitude;
      SimConfig trial_config = config;
      trial_config.kicks[0].momentum = magnitudes[mag_index];
      trial_config.seed = mix_seed(config.seed + static_cast<std::uint64_t>(idx) *
                                                     0x9E3779B97F4A7C15ULL);
      trial_config.record_states = false;

      const SimResult sim = simulate(trial_config);
      TrialResult& out = results[idx];
      out.trial = idx;
      out.applied_momentum = magnitudes[mag_index];
      out.estimate =
          estimate_kick(sim.trace, config.model, d,
                        trial_config.kicks[0].sample_index, prior, initial);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace kicksense
