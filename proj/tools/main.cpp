// kicksense: build the resonator model and regulator, run closed-loop
// simulations, and estimate momentum kicks from recorded traces. Every
// artifact starts with a `# config_hash=... seed=...` line so results can be
// traced back to the exact configuration that produced them (strip '#' lines
// to recover plain JSON/CSV).

#include <cstdint>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kicksense/config.hpp"
#include "kicksense/control.hpp"
#include "kicksense/csv.hpp"
#include "kicksense/errors.hpp"
#include "kicksense/estimation.hpp"
#include "kicksense/kick.hpp"
#include "kicksense/lti.hpp"
#include "kicksense/model.hpp"
#include "kicksense/sim.hpp"
#include "kicksense/spectral.hpp"

namespace {

using namespace kicksense;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string trace_path;  // estimate only
};

ExperimentConfig load(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args.config_path);
  if (args.seed) cfg.sim.seed = *args.seed;
  return cfg;
}

Provenance provenance(const ExperimentConfig& cfg) {
  return {config_hash(cfg), cfg.sim.seed};
}

std::ofstream open_report(const std::filesystem::path& file,
                          const Provenance& prov) {
  std::ofstream out(file);
  if (!out)
    throw ValidationError("cannot open '" + file.string() + "' for writing");
  out << provenance_header(prov) << '\n';
  out << std::setprecision(6);
  return out;
}

void write_json_artifact(const std::filesystem::path& file,
                         const Provenance& prov, const std::string& body) {
  std::ofstream out(file);
  if (!out)
    throw ValidationError("cannot open '" + file.string() + "' for writing");
  out << provenance_header(prov) << '\n' << body << '\n';
}

RegulatorGains design_regulator(const StateSpaceModel& model,
                                const ControlConfig& control) {
  const CostWeights weights = default_cost_weights(model, control.n_u);
  const Eigen::MatrixXd k_c = lqr_gain(model, weights);
  const Eigen::MatrixXd k_f = kalman_gain_continuous(model);
  RegulatorGains gains = assemble_lqg(model, k_c, k_f);
  discretize_regulator(gains, control.t_exec_s);
  return gains;
}

int velocity_slot(const StateSpaceModel& model, int mode) {
  for (std::size_t i = 0; i < model.state_labels.size(); ++i)
    if (model.state_labels[i].mode == mode &&
        model.state_labels[i].kind == StateLabel::Kind::velocity)
      return static_cast<int>(i);
  throw ValidationError("model: no velocity state for mode " +
                        std::to_string(mode));
}

int position_slot(const StateSpaceModel& model, int mode) {
  for (std::size_t i = 0; i < model.state_labels.size(); ++i)
    if (model.state_labels[i].mode == mode &&
        model.state_labels[i].kind == StateLabel::Kind::position)
      return static_cast<int>(i);
  throw ValidationError("model: no position state for mode " +
                        std::to_string(mode));
}

/// Kick prior per mode: prior_scale times the free-plant stationary velocity
/// variance, so the inflated slot dwarfs any plausible thermal velocity.
KickPrior make_prior(const StateSpaceModel& model, const DiscreteModel& dmodel,
                     const ExperimentConfig& cfg) {
  const Eigen::MatrixXd stat = discrete_lyapunov(dmodel.A_d, dmodel.Q_d);
  KickPrior prior;
  prior.sigma_sq.resize(static_cast<Eigen::Index>(model.modes.size()));
  for (std::size_t i = 0; i < model.modes.size(); ++i) {
    const int v = velocity_slot(model, static_cast<int>(i));
    prior.sigma_sq(static_cast<Eigen::Index>(i)) =
        cfg.kick.prior_scale * stat(v, v);
  }
  return prior;
}

/// Initial filter belief matching how stationary traces actually start: zero
/// mean, free-plant stationary covariance. Seeding the filter with its own
/// steady-state covariance instead makes it overconfident about an unknown
/// x0, and the resulting error decays at the slow filter poles (tens of ms),
/// visibly coloring the innovations.
GaussianBelief stationary_belief(const DiscreteModel& dmodel) {
  GaussianBelief b;
  b.t = 0.0;
  b.x = Eigen::VectorXd::Zero(dmodel.n());
  b.cov = discrete_lyapunov(dmodel.A_d, dmodel.Q_d);
  return b;
}

Eigen::VectorXd kick_weights(const ExperimentConfig& cfg) {
  if (cfg.kick.mode_weights.empty()) return Eigen::VectorXd();
  return Eigen::Map<const Eigen::VectorXd>(
      cfg.kick.mode_weights.data(),
      static_cast<Eigen::Index>(cfg.kick.mode_weights.size()));
}

SimConfig make_sim(const ExperimentConfig& cfg, const StateSpaceModel& model,
                   const std::optional<RegulatorGains>& regulator,
                   bool schedule_kick) {
  SimConfig sim;
  sim.model = model;
  sim.regulator = regulator;
  sim.t_s = cfg.sim.t_s;
  sim.n_samples = cfg.sim.n_samples;
  sim.seed = cfg.sim.seed;
  sim.stationary_start = cfg.sim.stationary_start;
  if (schedule_kick) {
    if (cfg.kick.t_p_index < 1)
      throw ValidationError("kick.t_p_index: must be >= 1 to schedule a kick");
    if (cfg.kick.magnitudes.empty())
      throw ValidationError("kick.magnitudes: at least one required");
    sim.kicks.push_back(
        {cfg.kick.t_p_index, cfg.kick.magnitudes.front(), kick_weights(cfg)});
  }
  return sim;
}

/// Largest power-of-two segment that fits the signal, capped at `configured`.
int fitted_segment(int configured, std::size_t n) {
  int seg = 1;
  while (seg <= configured / 2 && static_cast<std::size_t>(seg) <= n / 2)
    seg *= 2;
  return seg;
}

WelchOptions welch_options(const AnalysisSection& an, std::size_t n,
                           int threads) {
  WelchOptions opts;
  opts.segment_length = fitted_segment(an.segment_length, n);
  opts.overlap = an.overlap;
  opts.window = an.window;
  opts.threads = threads;
  return opts;
}

/// Innovation whiteness over the first `keep` samples (0 = whole trace).
/// Estimation runs pass the pre-kick length so the verdict reflects model
/// match, not the kick transient we are there to detect. The Welch segment is
/// capped so at least ~64 segments get averaged; with fewer, chi-squared
/// scatter alone pushes individual bins past the 3 dB flatness limit.
void report_whiteness(std::ofstream& out, const Trace& trace,
                      const DiscreteModel& dmodel, const AnalysisSection& an,
                      int threads, std::size_t keep) {
  const bool sliced = keep > 0 && keep < trace.size();
  if (keep == 0 || keep > trace.size()) keep = trace.size();
  const char* label = sliced ? "whiteness (pre-kick)" : "whiteness";
  if (keep < 10000) {
    out << label << ": skipped (fewer than 10000 samples to score)\n";
    return;
  }
  FilterRun run = kf_run(trace, dmodel, stationary_belief(dmodel),
                         BeliefStorage::innovations_only);
  if (keep < run.innovations.size()) run.innovations.resize(keep);
  int seg = fitted_segment(an.segment_length, keep);
  while (seg > 256 && keep / static_cast<std::size_t>(seg) < 64) seg /= 2;
  WhitenessOptions opts;
  opts.band_low_hz = an.band_low_hz;
  opts.band_high_hz = an.band_high_hz;
  opts.welch.segment_length = seg;
  opts.welch.overlap = an.overlap;
  opts.welch.window = an.window;
  opts.welch.threads = threads;
  const WhitenessResult w =
      whiteness_test(run.innovations, 1.0 / trace.t_s, opts);
  out << label << ": " << (w.pass ? "pass" : "fail")
      << " (lag_pass_fraction=" << w.lag_pass_fraction
      << ", max_autocorr=" << w.max_abs_autocorr
      << ", band_deviation_db=" << w.max_band_deviation_db << ")\n";
}

void write_summary(const std::filesystem::path& file, const Provenance& prov,
                   const ExperimentConfig& cfg, const StateSpaceModel& model,
                   const DiscreteModel& dmodel,
                   const std::vector<TrialResult>& trials,
                   const Trace* whiteness_trace, std::size_t whiteness_keep,
                   int threads) {
  const int v1 = velocity_slot(model, 0);
  const double w0 =
      cfg.kick.mode_weights.empty() ? 1.0 : cfg.kick.mode_weights.front();
  const double m0 = model.modes.front().m_eff_kg;

  std::vector<double> applied_dv, est_dv;
  double bound_sum = 0.0;
  int warnings = 0;
  for (const TrialResult& t : trials) {
    applied_dv.push_back(t.applied_momentum * w0 / m0);
    est_dv.push_back(t.estimate.delta_x(v1));
    bound_sum += std::sqrt(t.estimate.cov_bound(v1, v1));
    if (t.estimate.stationarity_warning) ++warnings;
  }

  std::ofstream out = open_report(file, prov);
  out << "trials: " << trials.size() << '\n';
  out << "bound_dv1 (mean): " << bound_sum / double(trials.size()) << " m/s\n";
  out << "stationarity warnings: " << warnings << " / " << trials.size()
      << '\n';

  bool multiple = false;
  for (double a : applied_dv)
    if (a != applied_dv.front()) multiple = true;
  if (multiple) {
    const EnsembleStats stats = ensemble_stats(applied_dv, est_dv);
    out << "regression: slope=" << stats.slope
        << " intercept=" << stats.intercept << " m/s\n";
    for (const GroupStats& g : stats.groups)
      out << "applied_dv1=" << g.magnitude << " mean=" << g.mean
          << " std=" << g.stddev << " n=" << g.n << '\n';
  } else {
    out << "regression: n/a (single applied magnitude)\n";
    for (std::size_t i = 0; i < trials.size(); ++i)
      out << "applied_dv1=" << applied_dv[i] << " est_dv1=" << est_dv[i]
          << '\n';
  }
  if (whiteness_trace)
    report_whiteness(out, *whiteness_trace, dmodel, cfg.analysis, threads,
                     whiteness_keep);
  else
    out << "whiteness: skipped (no trace simulated)\n";
}

int cmd_build(const CommonArgs& args) {
  const ExperimentConfig cfg = load(args);
  const Provenance prov = provenance(cfg);
  const std::filesystem::path out_dir(args.out_dir);
  std::filesystem::create_directories(out_dir);

  const StateSpaceModel model =
      build_full_model(cfg.modes, cfg.disturbance, cfg.temperature_k,
                       cfg.measurement_noise_psd);
  const DiscreteModel dmodel = discretize(model, cfg.sim.t_s);
  write_json_artifact(out_dir / "model.json", prov,
                      serialize_model(model, dmodel));

  std::ofstream report = open_report(out_dir / "report.txt", prov);
  const int n = model.n();
  const int obs = observability_rank(model.A, model.C);
  const int ctrl = controllability_rank(model.A, model.B);
  report << "states: " << n << " (" << model.modes.size() << " modes)\n";
  report << "observability rank: " << obs << " / " << n << '\n';
  report << "observable: " << (obs == n ? "yes" : "no") << '\n';
  report << "controllability rank: " << ctrl << " / " << n << '\n';
  report << "controllable: " << (ctrl == n ? "yes" : "no") << '\n';
  report << "stabilizable: " << (is_stabilizable(model.A, model.B) ? "yes" : "no")
         << '\n';
  for (std::size_t i = 0; i < model.modes.size(); ++i) {
    const int z = position_slot(model, static_cast<int>(i));
    const int v = velocity_slot(model, static_cast<int>(i));
    Eigen::MatrixXd a_sub(2, 2);
    a_sub << model.A(z, z), model.A(z, v), model.A(v, z), model.A(v, v);
    Eigen::MatrixXd b_sub(2, 1);
    b_sub << model.B(z, 0), model.B(v, 0);
    const int sub = controllability_rank(a_sub, b_sub);
    report << "mode " << i + 1 << " (" << model.modes[i].f_hz
           << " Hz): subsystem controllability rank " << sub
           << " / 2, controllable: " << (sub == 2 ? "yes" : "no") << '\n';
  }

  if (cfg.control.enabled) {
    const RegulatorGains gains = design_regulator(model, cfg.control);
    write_json_artifact(out_dir / "gains.json", prov, serialize_gains(gains));
    Eigen::MatrixXd closed(2 * n, 2 * n);
    closed << model.A, -model.B * gains.k_c, gains.k_f * model.C, gains.a_f;
    const Eigen::VectorXd scale = balance_scaling(closed);
    closed = scale.asDiagonal() * closed * scale.cwiseInverse().asDiagonal();
    Eigen::VectorXcd eigs = closed.eigenvalues();
    std::sort(eigs.begin(), eigs.end(),
              [](const std::complex<double>& a, const std::complex<double>& b) {
                return a.real() != b.real() ? a.real() > b.real()
                                            : a.imag() > b.imag();
              });
    report << "closed-loop eigenvalues [rad/s]:\n";
    for (Eigen::Index k = 0; k < eigs.size(); ++k)
      report << "  " << eigs(k).real() << (eigs(k).imag() < 0 ? " - " : " + ")
             << std::abs(eigs(k).imag()) << "i\n";
  } else {
    report << "control: disabled, no gains written\n";
  }

  std::cout << "wrote " << (out_dir / "model.json").string() << ", "
            << (out_dir / "report.txt").string();
  if (cfg.control.enabled)
    std::cout << ", " << (out_dir / "gains.json").string();
  std::cout << '\n';
  return 0;
}

int cmd_simulate(const CommonArgs& args) {
  const ExperimentConfig cfg = load(args);
  if (cfg.sim.n_samples < 1)
    throw ValidationError("sim.n_samples: must be >= 1");
  const Provenance prov = provenance(cfg);
  const std::filesystem::path out_dir(args.out_dir);
  std::filesystem::create_directories(out_dir);

  const StateSpaceModel model =
      build_full_model(cfg.modes, cfg.disturbance, cfg.temperature_k,
                       cfg.measurement_noise_psd);
  std::optional<RegulatorGains> regulator;
  if (cfg.control.enabled) regulator = design_regulator(model, cfg.control);

  const bool kick_scheduled =
      cfg.kick.t_p_index > 0 && !cfg.kick.magnitudes.empty();
  SimConfig sim = make_sim(cfg, model, regulator, kick_scheduled);
  sim.record_states = true;
  const SimResult result = simulate(sim);

  write_trace_csv(out_dir / "trace.csv", result.trace, prov);
  write_states_csv(out_dir / "truth.csv", cfg.sim.t_s, result.states, prov);
  const PsdEstimate psd = welch_psd(
      result.trace.y, 1.0 / cfg.sim.t_s,
      welch_options(cfg.analysis, result.trace.size(), args.threads));
  write_psd_csv(out_dir / "psd.csv", psd, prov);

  std::cout << "wrote " << (out_dir / "trace.csv").string() << ", "
            << (out_dir / "truth.csv").string() << ", "
            << (out_dir / "psd.csv").string() << '\n';
  return 0;
}

int cmd_estimate(const CommonArgs& args) {
  const ExperimentConfig cfg = load(args);
  if (cfg.kick.t_p_index < 1)
    throw ValidationError("kick.t_p_index: must be >= 1 for estimation");
  const Provenance prov = provenance(cfg);
  const std::filesystem::path out_dir(args.out_dir);
  std::filesystem::create_directories(out_dir);

  const StateSpaceModel model =
      build_full_model(cfg.modes, cfg.disturbance, cfg.temperature_k,
                       cfg.measurement_noise_psd);

  Trace trace;
  double applied = 0.0;
  if (!args.trace_path.empty()) {
    trace = read_trace_csv(args.trace_path);
    if (!cfg.kick.magnitudes.empty()) applied = cfg.kick.magnitudes.front();
  } else {
    if (cfg.sim.n_samples < 1)
      throw ValidationError("sim.n_samples: must be >= 1");
    std::optional<RegulatorGains> regulator;
    if (cfg.control.enabled) regulator = design_regulator(model, cfg.control);
    trace = simulate(make_sim(cfg, model, regulator, true)).trace;
    applied = cfg.kick.magnitudes.front();
  }
  if (cfg.kick.t_p_index >= static_cast<std::int64_t>(trace.size()))
    throw ValidationError("kick.t_p_index: beyond the end of the trace");

  const DiscreteModel dmodel = discretize(model, trace.t_s);
  const KickPrior prior = make_prior(model, dmodel, cfg);
  TrialResult trial;
  trial.trial = 0;
  trial.applied_momentum = applied;
  trial.estimate = estimate_kick(trace, model, dmodel, cfg.kick.t_p_index,
                                 prior, stationary_belief(dmodel));

  write_ensemble_csv(out_dir / "ensemble.csv", {trial}, prov);
  write_summary(out_dir / "summary.txt", prov, cfg, model, dmodel, {trial},
                &trace, static_cast<std::size_t>(cfg.kick.t_p_index),
                args.threads);

  std::cout << "wrote " << (out_dir / "ensemble.csv").string() << ", "
            << (out_dir / "summary.txt").string() << '\n';
  return 0;
}

int cmd_montecarlo(const CommonArgs& args) {
  const ExperimentConfig cfg = load(args);
  if (cfg.sim.n_samples < 1)
    throw ValidationError("sim.n_samples: must be >= 1");
  const Provenance prov = provenance(cfg);
  const std::filesystem::path out_dir(args.out_dir);
  std::filesystem::create_directories(out_dir);

  const StateSpaceModel model =
      build_full_model(cfg.modes, cfg.disturbance, cfg.temperature_k,
                       cfg.measurement_noise_psd);
  std::optional<RegulatorGains> regulator;
  if (cfg.control.enabled) regulator = design_regulator(model, cfg.control);
  const SimConfig sim = make_sim(cfg, model, regulator, true);
  const DiscreteModel dmodel = discretize(model, cfg.sim.t_s);
  const KickPrior prior = make_prior(model, dmodel, cfg);

  const std::vector<TrialResult> trials = run_montecarlo(
      sim, cfg.kick.magnitudes, cfg.kick.trials, prior, args.threads);

  write_ensemble_csv(out_dir / "ensemble.csv", trials, prov);

  const int v1 = velocity_slot(model, 0);
  const double w0 =
      cfg.kick.mode_weights.empty() ? 1.0 : cfg.kick.mode_weights.front();
  std::vector<double> applied_dv, est_dv;
  for (const TrialResult& t : trials) {
    applied_dv.push_back(t.applied_momentum * w0 /
                         model.modes.front().m_eff_kg);
    est_dv.push_back(t.estimate.delta_x(v1));
  }
  if (cfg.kick.magnitudes.size() > 1) {
    const EnsembleStats stats = ensemble_stats(applied_dv, est_dv);
    write_stats_csv(out_dir / "stats.csv", stats, prov);
  }

  // One representative kick-free trace for the whiteness verdict; the
  // per-trial sims inside run_montecarlo are not retained.
  SimConfig rep = sim;
  rep.kicks.clear();
  const Trace trace = simulate(rep).trace;
  write_summary(out_dir / "summary.txt", prov, cfg, model, dmodel, trials,
                &trace, 0, args.threads);

  std::cout << "wrote " << (out_dir / "ensemble.csv").string() << ", "
            << (out_dir / "summary.txt").string();
  if (cfg.kick.magnitudes.size() > 1)
    std::cout << ", " << (out_dir / "stats.csv").string();
  std::cout << '\n';
  return 0;
}

void add_common(CLI::App* cmd, CommonArgs& args, std::uint64_t& seed_value,
                bool with_trace) {
  cmd->add_option("--config", args.config_path, "experiment config JSON")
      ->required();
  cmd->add_option("--seed", seed_value, "override the config seed");
  cmd->add_option("--out", args.out_dir, "output directory (default .)");
  cmd->add_option("--threads", args.threads,
                  "worker threads (0 = runtime default)");
  if (with_trace)
    cmd->add_option("--trace", args.trace_path,
                    "estimate from a recorded trace instead of simulating");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "feedback-cooled resonator simulator and momentum-kick estimator"};
  app.require_subcommand(1);

  CommonArgs args;
  std::uint64_t seed_value = 0;
  CLI::App* build = app.add_subcommand(
      "build", "build the model, design gains, write the structural report");
  CLI::App* simulate_cmd =
      app.add_subcommand("simulate", "run one closed-loop simulation");
  CLI::App* estimate = app.add_subcommand(
      "estimate", "estimate a single kick from a trace or an inline sim");
  CLI::App* montecarlo = app.add_subcommand(
      "montecarlo", "kick-estimation ensemble over magnitudes and trials");
  add_common(build, args, seed_value, false);
  add_common(simulate_cmd, args, seed_value, false);
  add_common(estimate, args, seed_value, true);
  add_common(montecarlo, args, seed_value, false);

  try {
    app.parse(argc, argv);
    for (CLI::App* cmd : {build, simulate_cmd, estimate, montecarlo})
      if (cmd->parsed() && cmd->count("--seed") > 0) args.seed = seed_value;
    if (build->parsed()) return cmd_build(args);
    if (simulate_cmd->parsed()) return cmd_simulate(args);
    if (estimate->parsed()) return cmd_estimate(args);
    return cmd_montecarlo(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const kicksense::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const kicksense::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
