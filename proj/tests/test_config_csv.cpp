#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "kicksense/config.hpp"
#include "kicksense/csv.hpp"
#include "kicksense/errors.hpp"
#include "kicksense/lti.hpp"
#include "kicksense/model.hpp"
#include "test_helpers.hpp"

using namespace kicksense;
using kicksense::test::reference_disturbance;
using kicksense::test::reference_modes;

namespace {

std::filesystem::path tmp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::vector<std::string> all_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

const char* kMinimalConfig = R"({
  "modes": [{"f_hz": 23.05e3, "q": 110000, "m_eff_kg": 4.52e-12, "b_f": 1e-9}]
})";

const char* kFullConfig = R"({
  "temperature_k": 77.0,
  "measurement_noise_psd": 2.5e-13,
  "modes": [
    {"f_hz": 23.05e3, "q": 110000, "m_eff_kg": 4.52e-12, "b_f": 1.0e-9},
    {"f_hz": 68.02e3, "q": 150000, "m_eff_kg": 6.06e-13}
  ],
  "disturbance": {"peak_freq_hz": 21e3, "peak_q": 1000, "peak_gain": 1.3e-3,
                  "bp_low_hz": 10e3, "bp_high_hz": 200e3, "bp_gain": 1.2e-6},
  "control": {"enabled": false, "n_u": 5e-11, "t_exec_s": 2.5e-7},
  "sim": {"t_s": 2e-6, "n_samples": 5000, "seed": 99, "stationary_start": true},
  "kick": {"t_p_index": 2500, "magnitudes": [3.6e-17, 1.8e-16], "trials": 7,
           "prior_scale": 1e5, "mode_weights": [1.0, 0.0]},
  "analysis": {"segment_length": 4096, "overlap": 0.25, "window": "rect",
               "band_low_hz": 5e3, "band_high_hz": 90e3}
})";

}  // namespace

TEST_CASE("parse_config fills defaults for omitted sections") {
  const ExperimentConfig c = parse_config(kMinimalConfig);
  CHECK(c.temperature_k == 300.0);
  CHECK(c.measurement_noise_psd == 0.0);
  REQUIRE(c.modes.size() == 1);
  CHECK(c.modes[0].f_hz == 23.05e3);
  CHECK(c.modes[0].q == 110000.0);
  CHECK(c.modes[0].m_eff_kg == 4.52e-12);
  CHECK(c.modes[0].b_f == 1e-9);
  CHECK(c.control.enabled);
  CHECK(c.control.n_u == 1e-12);
  CHECK(c.control.t_exec_s == kDefaultExecPeriod);
  CHECK(c.sim.t_s == 1e-6);
  CHECK(c.sim.n_samples == 0);
  CHECK(c.sim.seed == 0);
  CHECK_FALSE(c.sim.stationary_start);
  CHECK(c.kick.t_p_index == 0);
  CHECK(c.kick.magnitudes.empty());
  CHECK(c.kick.trials == 100);
  CHECK(c.kick.prior_scale == 1e6);
  CHECK(c.kick.mode_weights.empty());
  CHECK(c.analysis.segment_length == (1 << 16));
  CHECK(c.analysis.overlap == 0.5);
  CHECK(c.analysis.window == "hann");
  CHECK(c.analysis.band_low_hz == 10e3);
  CHECK(c.analysis.band_high_hz == 130e3);
}

TEST_CASE("parse_config reads every section") {
  const ExperimentConfig c = parse_config(kFullConfig);
  CHECK(c.temperature_k == 77.0);
  CHECK(c.measurement_noise_psd == 2.5e-13);
  REQUIRE(c.modes.size() == 2);
  CHECK(c.modes[1].f_hz == 68.02e3);
  CHECK(c.modes[1].b_f == 0.0);  // omitted on the second mode
  CHECK(c.disturbance.peak_freq_hz == 21e3);
  CHECK(c.disturbance.peak_q == 1000.0);
  CHECK(c.disturbance.peak_gain == 1.3e-3);
  CHECK(c.disturbance.bp_low_hz == 10e3);
  CHECK(c.disturbance.bp_high_hz == 200e3);
  CHECK(c.disturbance.bp_gain == 1.2e-6);
  CHECK_FALSE(c.control.enabled);
  CHECK(c.control.n_u == 5e-11);
  CHECK(c.control.t_exec_s == 2.5e-7);
  CHECK(c.sim.t_s == 2e-6);
  CHECK(c.sim.n_samples == 5000);
  CHECK(c.sim.seed == 99);
  CHECK(c.sim.stationary_start);
  CHECK(c.kick.t_p_index == 2500);
  CHECK(c.kick.magnitudes == std::vector<double>{3.6e-17, 1.8e-16});
  CHECK(c.kick.trials == 7);
  CHECK(c.kick.prior_scale == 1e5);
  CHECK(c.kick.mode_weights == std::vector<double>{1.0, 0.0});
  CHECK(c.analysis.segment_length == 4096);
  CHECK(c.analysis.overlap == 0.25);
  CHECK(c.analysis.window == "rect");
  CHECK(c.analysis.band_low_hz == 5e3);
  CHECK(c.analysis.band_high_hz == 90e3);
}

TEST_CASE("parse_config names the offending field") {
  SUBCASE("missing modes") {
    CHECK_THROWS_WITH_AS(parse_config("{}"), "modes: at least one required",
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"modes": []})"),
                         "modes: at least one required", ValidationError);
  }
  SUBCASE("top level") {
    CHECK_THROWS_WITH_AS(parse_config("[1, 2]"),
                         "config: top level must be an object", ValidationError);
    CHECK_THROWS_WITH(parse_config("{not json"),
                      doctest::Contains("config: JSON parse error"));
  }
  SUBCASE("mode fields") {
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"modes": [{"q": 1, "m_eff_kg": 1}]})"),
        "modes[0].f_hz: required", ValidationError);
    CHECK_THROWS_WITH_AS(
        parse_config(
            R"({"modes": [{"f_hz": 1e3, "q": "high", "m_eff_kg": 1}]})"),
        "modes[0].q: expected a number", ValidationError);
    // Physics validation runs on the parsed values and keeps the same paths.
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"modes": [
          {"f_hz": 1e3, "q": 100, "m_eff_kg": 1e-12},
          {"f_hz": 2e3, "q": -5, "m_eff_kg": 1e-12}]})"),
        "modes[1].q: must be > 0", ValidationError);
  }
  SUBCASE("section fields") {
    const std::string base =
        R"("modes": [{"f_hz": 1e3, "q": 100, "m_eff_kg": 1e-12}])";
    CHECK_THROWS_WITH_AS(parse_config("{" + base + R"(, "control": {"n_u": 0}})"),
                         "control.n_u: must be > 0", ValidationError);
    CHECK_THROWS_WITH_AS(
        parse_config("{" + base + R"(, "control": {"enabled": 1}})"),
        "control.enabled: expected a boolean", ValidationError);
    CHECK_THROWS_WITH_AS(
        parse_config("{" + base + R"(, "sim": {"n_samples": 2.5}})"),
        "sim.n_samples: expected an integer", ValidationError);
    CHECK_THROWS_WITH_AS(parse_config("{" + base + R"(, "sim": {"seed": -1}})"),
                         "sim.seed: expected a non-negative integer",
                         ValidationError);
    CHECK_THROWS_WITH_AS(
        parse_config("{" + base + R"(, "kick": {"trials": 0}})"),
        "kick.trials: must be a positive integer", ValidationError);
    CHECK_THROWS_WITH_AS(
        parse_config("{" + base + R"(, "kick": {"mode_weights": [1, 2]}})"),
        "kick.mode_weights: length must equal the number of modes",
        ValidationError);
    CHECK_THROWS_WITH_AS(
        parse_config("{" + base + R"(, "analysis": {"window": 7}})"),
        "analysis.window: expected a string", ValidationError);
  }
}

TEST_CASE("config serialization round-trips fields and hash") {
  const ExperimentConfig c = parse_config(kFullConfig);
  const ExperimentConfig back = parse_config(serialize_config(c));
  CHECK(back.temperature_k == c.temperature_k);
  CHECK(back.measurement_noise_psd == c.measurement_noise_psd);
  REQUIRE(back.modes.size() == c.modes.size());
  for (std::size_t i = 0; i < c.modes.size(); ++i) {
    CHECK(back.modes[i].f_hz == c.modes[i].f_hz);
    CHECK(back.modes[i].q == c.modes[i].q);
    CHECK(back.modes[i].m_eff_kg == c.modes[i].m_eff_kg);
    CHECK(back.modes[i].b_f == c.modes[i].b_f);
  }
  CHECK(back.control.enabled == c.control.enabled);
  CHECK(back.control.n_u == c.control.n_u);
  CHECK(back.sim.seed == c.sim.seed);
  CHECK(back.kick.magnitudes == c.kick.magnitudes);
  CHECK(back.kick.mode_weights == c.kick.mode_weights);
  CHECK(back.analysis.window == c.analysis.window);
  CHECK(config_hash(back) == config_hash(c));
}

TEST_CASE("config_hash tracks content changes") {
  const ExperimentConfig c = parse_config(kFullConfig);
  ExperimentConfig seed_changed = c;
  seed_changed.sim.seed += 1;
  CHECK(config_hash(seed_changed) != config_hash(c));
  ExperimentConfig weight_changed = c;
  weight_changed.control.n_u *= 2.0;
  CHECK(config_hash(weight_changed) != config_hash(c));
  // Same content hashes the same even through an unrelated copy.
  const ExperimentConfig copy = c;
  CHECK(config_hash(copy) == config_hash(c));
}

TEST_CASE("load_config reads a file and reports missing ones") {
  const std::filesystem::path p = tmp_file("kicksense_config_test.json");
  {
    std::ofstream out(p);
    out << kFullConfig;
  }
  const ExperimentConfig c = load_config(p);
  CHECK(config_hash(c) == config_hash(parse_config(kFullConfig)));
  std::filesystem::remove(p);
  CHECK_THROWS_WITH(load_config(p), doctest::Contains("cannot open"));
}

TEST_CASE("model serialization round-trips bit-exact") {
  const StateSpaceModel model = kicksense::test::reference_model();
  const DiscreteModel dmodel = discretize(model, 1e-6);
  const std::string text = serialize_model(model, dmodel);
  StateSpaceModel m2;
  DiscreteModel d2;
  deserialize_model(text, m2, d2);
  CHECK(same_bits(m2.A, model.A));
  CHECK(same_bits(m2.B, model.B));
  CHECK(same_bits(m2.G, model.G));
  CHECK(same_bits(m2.C, model.C));
  CHECK(same_bits(m2.R, model.R));
  REQUIRE(m2.state_labels.size() == model.state_labels.size());
  for (std::size_t i = 0; i < model.state_labels.size(); ++i) {
    CHECK(m2.state_labels[i].kind == model.state_labels[i].kind);
    CHECK(m2.state_labels[i].mode == model.state_labels[i].mode);
  }
  REQUIRE(m2.modes.size() == model.modes.size());
  for (std::size_t i = 0; i < model.modes.size(); ++i) {
    CHECK(m2.modes[i].f_hz == model.modes[i].f_hz);
    CHECK(m2.modes[i].m_eff_kg == model.modes[i].m_eff_kg);
  }
  CHECK(same_bits(d2.A_d, dmodel.A_d));
  CHECK(same_bits(d2.B_d, dmodel.B_d));
  CHECK(same_bits(d2.Q_d, dmodel.Q_d));
  CHECK(same_bits(d2.C, dmodel.C));
  CHECK(same_bits(d2.R_d, dmodel.R_d));
  CHECK(d2.t_s == dmodel.t_s);
  CHECK_THROWS_WITH(
      [&] {
        StateSpaceModel m3;
        DiscreteModel d3;
        deserialize_model("{oops", m3, d3);
      }(),
      doctest::Contains("model: JSON parse error"));
}

TEST_CASE("gain serialization round-trips bit-exact") {
  // Arbitrary awkward values: irrational, subnormal-adjacent, negative zero.
  RegulatorGains g;
  g.k_c.resize(1, 4);
  g.k_c << 1.0 / 3.0, std::sqrt(2.0), -7.25e-13, -0.0;
  g.k_f.resize(4, 1);
  g.k_f << 1e6, -4.0, 2.2250738585072014e-308, 0.1;
  g.a_f.resize(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      g.a_f(i, j) = std::sin(3.0 * i + j) * std::exp2(10 * (i - j));
  g.a_df = g.a_f * 0.3;
  g.k_df = g.k_f * 1.7e-5;
  g.t_exec = 2.5e-7;

  const RegulatorGains back = deserialize_gains(serialize_gains(g));
  CHECK(same_bits(back.k_c, g.k_c));
  CHECK(same_bits(back.k_f, g.k_f));
  CHECK(same_bits(back.a_f, g.a_f));
  CHECK(same_bits(back.a_df, g.a_df));
  CHECK(same_bits(back.k_df, g.k_df));
  CHECK(back.t_exec == g.t_exec);
  CHECK_THROWS_WITH(deserialize_gains("]"),
                    doctest::Contains("gains: JSON parse error"));
  CHECK_THROWS_WITH_AS(deserialize_gains(R"({"k_c": 5})"),
                       "k_c: expected a 2-d array", ValidationError);
}

TEST_CASE("trace CSV round-trips and stamps provenance") {
  Trace tr;
  tr.t_s = 1e-6;
  tr.y = {1.0 / 3.0, -2.5e-9, 0.0, std::sqrt(3.0), -1.0};
  tr.u = {0.0, 1e-300, -7.0, 0.25, 3.3333333333333331};
  const std::filesystem::path p = tmp_file("kicksense_trace_test.csv");
  write_trace_csv(p, tr, {0x123456789abcdef0ULL, 77});

  CHECK(first_line(p) == "# config_hash=123456789abcdef0 seed=77");
  const Trace back = read_trace_csv(p);
  CHECK(back.t_s == tr.t_s);
  CHECK(back.y == tr.y);
  CHECK(back.u == tr.u);
  std::filesystem::remove(p);
}

TEST_CASE("trace CSV reader rejects malformed files") {
  const std::filesystem::path p = tmp_file("kicksense_trace_bad.csv");
  auto write_text = [&](const char* text) {
    std::ofstream out(p);
    out << text;
  };
  CHECK_THROWS_WITH(read_trace_csv(tmp_file("kicksense_no_such.csv")),
                    doctest::Contains("cannot open"));
  write_text("t,y,u\n0,1,2\n");
  CHECK_THROWS_WITH(read_trace_csv(p), doctest::Contains("at least two samples"));
  write_text("0,1\n1e-6,2\n");
  CHECK_THROWS_WITH(read_trace_csv(p), doctest::Contains("expected 3 columns"));
  write_text("0,abc,2\n1e-6,3,4\n");
  CHECK_THROWS_WITH(read_trace_csv(p), doctest::Contains("malformed number"));
  write_text("0,1,2\n0,3,4\n");
  CHECK_THROWS_WITH(read_trace_csv(p), doctest::Contains("non-increasing time"));
  std::filesystem::remove(p);
}

TEST_CASE("matrix-shaped CSV writers emit labeled columns") {
  const Provenance prov{0xabcULL, 3};

  SUBCASE("states") {
    Eigen::MatrixXd states(2, 3);
    states << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
    const std::filesystem::path p = tmp_file("kicksense_states_test.csv");
    write_states_csv(p, 0.5, states, prov);
    const std::vector<std::string> lines = all_lines(p);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "# config_hash=0000000000000abc seed=3");
    CHECK(lines[1] == "t,x1,x2");
    CHECK(lines[2] == "0,1,4");
    CHECK(lines[3] == "0.5,2,5");
    CHECK(lines[4] == "1,3,6");
    std::filesystem::remove(p);
  }

  SUBCASE("beliefs upper triangle") {
    GaussianBelief b;
    b.t = 0.25;
    b.x = Eigen::Vector2d(1.5, -2.0);
    b.cov.resize(2, 2);
    b.cov << 4.0, 0.5, 0.5, 9.0;
    const std::filesystem::path p = tmp_file("kicksense_beliefs_test.csv");
    write_beliefs_csv(p, {b}, prov);
    const std::vector<std::string> lines = all_lines(p);
    REQUIRE(lines.size() == 3);
    CHECK(lines[1] == "t,x1,x2,cov1_1,cov1_2,cov2_2");
    CHECK(lines[2] == "0.25,1.5,-2,4,0.5,9");
    std::filesystem::remove(p);
  }

  SUBCASE("psd") {
    PsdEstimate psd;
    psd.freqs_hz = {0.0, 100.0};
    psd.values = {1e-12, 2e-12};
    const std::filesystem::path p = tmp_file("kicksense_psd_test.csv");
    write_psd_csv(p, psd, prov);
    const std::vector<std::string> lines = all_lines(p);
    REQUIRE(lines.size() == 4);
    CHECK(lines[1] == "freq_hz,psd");
    // %.17g picks digit strings freely; compare re-parsed values instead.
    CHECK(std::stod(lines[2].substr(lines[2].find(',') + 1)) == 1e-12);
    CHECK(std::stod(lines[3].substr(lines[3].find(',') + 1)) == 2e-12);
    std::filesystem::remove(p);
  }

  SUBCASE("stats") {
    EnsembleStats stats;
    stats.groups.push_back({3.6e-17, 3.5e-17, 4.0e-18, 100});
    const std::filesystem::path p = tmp_file("kicksense_stats_test.csv");
    write_stats_csv(p, stats, prov);
    const std::vector<std::string> lines = all_lines(p);
    REQUIRE(lines.size() == 3);
    CHECK(lines[1] == "magnitude,mean,std,n");
    std::stringstream row(lines[2]);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
    REQUIRE(cells.size() == 4);
    CHECK(cells[0] == 3.6e-17);
    CHECK(cells[1] == 3.5e-17);
    CHECK(cells[2] == 4.0e-18);
    CHECK(cells[3] == 100.0);
    std::filesystem::remove(p);
  }
}

TEST_CASE("ensemble CSV lists per-trial kick columns") {
  TrialResult t;
  t.trial = 5;
  t.applied_momentum = 3.6e-17;
  t.estimate.delta_x = Eigen::Vector2d(1e-9, 8e-6);
  t.estimate.cov_bound.resize(2, 2);
  t.estimate.cov_bound << 1e-18, 0.0, 0.0, 4e-12;
  t.estimate.modal_momentum = Eigen::VectorXd::Constant(1, 3.616e-17);
  const std::filesystem::path p = tmp_file("kicksense_ensemble_test.csv");
  write_ensemble_csv(p, {t}, {1, 2});
  const std::vector<std::string> lines = all_lines(p);
  REQUIRE(lines.size() == 3);
  CHECK(lines[1] == "trial,p_applied,p_est_mode1,dv1_est,dz1_est,bound_dv1");
  std::stringstream row(lines[2]);
  std::string cell;
  std::vector<double> cells;
  while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
  REQUIRE(cells.size() == 6);
  CHECK(cells[0] == 5.0);
  CHECK(cells[1] == 3.6e-17);
  CHECK(cells[2] == 3.616e-17);
  CHECK(cells[3] == 8e-6);
  CHECK(cells[4] == 1e-9);
  CHECK(cells[5] == 2e-6);
  std::filesystem::remove(p);

  TrialResult scalar;
  scalar.estimate.delta_x = Eigen::VectorXd::Constant(1, 1.0);
  CHECK_THROWS_WITH(write_ensemble_csv(p, {scalar}, {1, 2}),
                    doctest::Contains("fewer than two states"));
  std::filesystem::remove(p);
}

TEST_CASE("mode shape CSV feeds the effective-mass quadrature") {
  const std::filesystem::path p = tmp_file("kicksense_shape_test.csv");
  {
    std::ofstream out(p);
    out << "# exported grid\n"
           "x,y,z,phi,rho,dv\n"
           "0,0,0,1.0,3200,1e-18\n"
           "0,0,1,0.5,3200,1e-18\n";
  }
  const std::vector<ModeShapeSample> shape = read_mode_shape_csv(p);
  REQUIRE(shape.size() == 2);
  CHECK(shape[1].phi == 0.5);
  CHECK(shape[1].z == 1.0);
  CHECK(effective_mass(shape) == doctest::Approx(4.0e-15).epsilon(1e-12));
  {
    std::ofstream out(p);
    out << "0,0,0,1.0,3200\n";
  }
  CHECK_THROWS_WITH(read_mode_shape_csv(p), doctest::Contains("expected 6 columns"));
  {
    std::ofstream out(p);
    out << "# nothing but comments\n";
  }
  CHECK_THROWS_WITH(read_mode_shape_csv(p),
                    doctest::Contains("no mode shape samples"));
  std::filesystem::remove(p);
}
