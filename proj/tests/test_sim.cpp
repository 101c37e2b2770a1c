#include <cmath>
#include <vector>

#include <doctest.h>

#include "kicksense/control.hpp"
#include "kicksense/errors.hpp"
#include "kicksense/lti.hpp"
#include "kicksense/model.hpp"
#include "kicksense/sim.hpp"
#include "kicksense/spectral.hpp"
#include "test_helpers.hpp"

using namespace kicksense;
using kicksense::test::reference_disturbance;
using kicksense::test::reference_modes;

namespace {

StateSpaceModel one_mode_model(ModeParams mode, double temperature_k,
                               double noise_psd, double disturbance_gain) {
  DisturbanceParams d = reference_disturbance();
  d.peak_gain = disturbance_gain;
  d.bp_gain = disturbance_gain;
  return build_full_model({mode}, d, temperature_k, noise_psd);
}

/// Low-Q mode whose correlation time fits many times into a short trace, so
/// time averages converge fast.
ModeParams low_q_mode() { return {20e3, 3.0, 1e-12, 1.0e-9}; }

}  // namespace

TEST_CASE("identical seeds give identical traces") {
  SimConfig cfg;
  cfg.model = one_mode_model(low_q_mode(), 300.0, 1e-12, 1e-9);
  cfg.t_s = 1e-6;
  cfg.n_samples = 500;
  cfg.seed = 42;
  cfg.stationary_start = true;

  const SimResult a = simulate(cfg);
  const SimResult b = simulate(cfg);
  CHECK(a.trace.y == b.trace.y);
  CHECK(a.trace.u == b.trace.u);

  cfg.seed = 43;
  const SimResult c = simulate(cfg);
  CHECK(a.trace.y != c.trace.y);
}

TEST_CASE("kick adds momentum over effective mass to the chosen mode") {
  // Deterministic plant: zero temperature, readout noise and disturbance.
  std::vector<ModeParams> modes = {reference_modes()[0], reference_modes()[1]};
  DisturbanceParams d = reference_disturbance();
  d.peak_gain = 0.0;
  d.bp_gain = 0.0;
  SimConfig cfg;
  cfg.model = build_full_model(modes, d, 0.0, 0.0);
  cfg.t_s = 1e-6;
  cfg.n_samples = 4;
  cfg.seed = 0;
  cfg.record_states = true;

  SUBCASE("default weights hit mode 0 only") {
    cfg.kicks.push_back({2, 1.8e-16, {}});
    const SimResult r = simulate(cfg);
    const DiscreteModel dm = discretize(cfg.model, cfg.t_s);
    const Eigen::VectorXd propagated = dm.A_d * r.states.col(1);
    const Eigen::VectorXd jump = r.states.col(2) - propagated;
    const double dv = 1.8e-16 / modes[0].m_eff_kg;
    CHECK(dv == doctest::Approx(40e-6).epsilon(5e-3));
    CHECK(jump(1) == doctest::Approx(dv).epsilon(1e-12));
    for (int i = 0; i < jump.size(); ++i)
      if (i != 1) CHECK(std::abs(jump(i)) <= 1e-18);
  }

  SUBCASE("explicit weights select the second mode") {
    KickEvent kick;
    kick.sample_index = 1;
    kick.momentum = 5e-17;
    kick.mode_weights = (Eigen::VectorXd(2) << 0.0, 1.0).finished();
    cfg.kicks.push_back(kick);
    const SimResult r = simulate(cfg);
    CHECK(r.states(3, 1) ==
          doctest::Approx(5e-17 / modes[1].m_eff_kg).epsilon(1e-12));
    CHECK(r.states(1, 1) == 0.0);
  }
}

TEST_CASE("initial state is honored and propagated exactly") {
  DisturbanceParams d = reference_disturbance();
  d.peak_gain = 0.0;
  d.bp_gain = 0.0;
  SimConfig cfg;
  cfg.model = build_full_model({reference_modes()[0]}, d, 0.0, 0.0);
  cfg.t_s = 1e-6;
  cfg.n_samples = 3;
  cfg.record_states = true;
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(6);
  x0(0) = 1e-9;
  x0(1) = 2e-5;
  cfg.initial_state = x0;

  const SimResult r = simulate(cfg);
  const DiscreteModel dm = discretize(cfg.model, cfg.t_s);
  CHECK(r.states.col(0) == x0);
  CHECK((r.states.col(1) - dm.A_d * x0).norm() <= 1e-16 * x0.norm());
  CHECK(r.trace.y[0] == doctest::Approx(x0(1)).epsilon(1e-12));
}

TEST_CASE("free-run velocity variance matches the stationary law") {
  SimConfig cfg;
  cfg.model = one_mode_model(low_q_mode(), 300.0, 1e-18, 0.0);
  cfg.t_s = 1e-6;
  cfg.n_samples = 400000;
  cfg.seed = 5;
  cfg.stationary_start = true;
  cfg.record_states = true;

  const SimResult r = simulate(cfg);
  const DiscreteModel dm = discretize(cfg.model, cfg.t_s);
  const Eigen::MatrixXd p_stat = discrete_lyapunov(dm.A_d, dm.Q_d);

  const auto v = r.states.row(1);
  const double mean = v.mean();
  const double var = v.array().square().mean() - mean * mean;
  CHECK(var == doctest::Approx(p_stat(1, 1)).epsilon(0.03));

  // Equipartition closes the loop back to the temperature.
  const double m = cfg.model.modes[0].m_eff_kg;
  CHECK(m * p_stat(1, 1) ==
        doctest::Approx(kBoltzmann * 300.0).epsilon(1e-6));
}

TEST_CASE("measurement-noise-only trace recovers the configured noise floor") {
  ModeParams quiet = low_q_mode();
  SimConfig cfg;
  cfg.model = one_mode_model(quiet, 0.0, 1e-12, 0.0);
  cfg.t_s = 1e-6;
  cfg.n_samples = 1 << 17;
  cfg.seed = 21;

  const SimResult r = simulate(cfg);
  WelchOptions opts;
  opts.segment_length = 1 << 12;
  const PsdEstimate psd = welch_psd(r.trace.y, 1.0 / cfg.t_s, opts);

  double acc = 0.0;
  int count = 0;
  for (std::size_t j = 1; j + 1 < psd.values.size(); ++j) {
    acc += psd.values[j];
    ++count;
  }
  CHECK(acc / count == doctest::Approx(1e-12).epsilon(0.05));
}

TEST_CASE("feedback strictly reduces the stationary mode energy") {
  // Q high enough that extra damping matters, low enough that time averages
  // converge over the trace: natural decay 2.5e3/s, feedback adds ~7e4/s.
  const StateSpaceModel model =
      one_mode_model({20e3, 50.0, 1e-12, 1.0e-9}, 300.0, 1e-18, 0.0);
  const CostWeights w = default_cost_weights(model, 1e-17);
  RegulatorGains gains =
      assemble_lqg(model, lqr_gain(model, w), kalman_gain_continuous(model));

  SimConfig cfg;
  cfg.model = model;
  cfg.t_s = 1e-6;
  cfg.n_samples = 400000;
  cfg.seed = 17;
  cfg.stationary_start = true;
  cfg.record_states = true;

  const SimResult open = simulate(cfg);

  discretize_regulator(gains, cfg.t_s / 5.0);
  cfg.regulator = gains;
  const SimResult closed = simulate(cfg);

  auto variance = [](const auto& row) {
    const double mean = row.mean();
    return row.array().square().mean() - mean * mean;
  };
  CHECK(variance(closed.states.row(1)) < 0.5 * variance(open.states.row(1)));
}

TEST_CASE("monte carlo results do not depend on the thread count") {
  SimConfig cfg;
  cfg.model = one_mode_model(low_q_mode(), 300.0, 1e-12, 1e-9);
  cfg.t_s = 1e-6;
  cfg.n_samples = 1500;
  cfg.seed = 31;
  cfg.stationary_start = true;
  cfg.kicks.push_back({750, 1e-16, {}});

  KickPrior prior;
  prior.sigma_sq = Eigen::VectorXd::Constant(1, 1e-8);

  const auto serial = run_montecarlo(cfg, {5e-17, 1e-16}, 4, prior, 1);
  const auto parallel = run_montecarlo(cfg, {5e-17, 1e-16}, 4, prior, 2);
  REQUIRE(serial.size() == 8);
  REQUIRE(parallel.size() == 8);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].applied_momentum == parallel[i].applied_momentum);
    CHECK(serial[i].estimate.delta_x == parallel[i].estimate.delta_x);
    CHECK(serial[i].estimate.cov_bound == parallel[i].estimate.cov_bound);
  }
}

TEST_CASE("simulation input validation") {
  SimConfig cfg;
  cfg.model = one_mode_model(low_q_mode(), 300.0, 1e-12, 0.0);
  cfg.t_s = 1e-6;
  cfg.n_samples = 10;

  SUBCASE("negative sample count") {
    cfg.n_samples = -1;
    CHECK_THROWS_AS(simulate(cfg), ValidationError);
  }
  SUBCASE("nonpositive step") {
    cfg.t_s = 0.0;
    CHECK_THROWS_AS(simulate(cfg), ValidationError);
  }
  SUBCASE("kick outside the trace") {
    cfg.kicks.push_back({10, 1e-17, {}});
    CHECK_THROWS_AS(simulate(cfg), ValidationError);
  }
  SUBCASE("wrong initial state length") {
    cfg.initial_state = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(simulate(cfg), ValidationError);
  }
  SUBCASE("regulator execution period must divide the sample period") {
    const CostWeights w = default_cost_weights(cfg.model, 1e-10);
    RegulatorGains gains = assemble_lqg(cfg.model, lqr_gain(cfg.model, w),
                                        kalman_gain_continuous(cfg.model));
    discretize_regulator(gains, 3e-7);
    cfg.regulator = gains;
    CHECK_THROWS_AS(simulate(cfg), ValidationError);
  }
  SUBCASE("regulator must be discretized") {
    const CostWeights w = default_cost_weights(cfg.model, 1e-10);
    RegulatorGains gains = assemble_lqg(cfg.model, lqr_gain(cfg.model, w),
                                        kalman_gain_continuous(cfg.model));
    cfg.regulator = gains;
    CHECK_THROWS_AS(simulate(cfg), ValidationError);
  }
  SUBCASE("wrong kick weight length") {
    KickEvent kick;
    kick.sample_index = 1;
    kick.momentum = 1e-17;
    kick.mode_weights = Eigen::VectorXd::Ones(2);
    cfg.kicks.push_back(kick);
    CHECK_THROWS_AS(simulate(cfg), ValidationError);
  }
}
