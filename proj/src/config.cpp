#include "kicksense/config.hpp"

#include <fstream>

#include <json.hpp>

#include "kicksense/errors.hpp"

namespace kicksense {

namespace {

using nlohmann::json;

double require_number(const json& j, const std::string& path) {
  if (!j.is_number())
    throw ValidationError(path + ": expected a number");
  return j.get<double>();
}

double number_or(const json& parent, const std::string& key,
                 const std::string& path, double fallback) {
  if (!parent.contains(key)) return fallback;
  return require_number(parent.at(key), path + "." + key);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty() || !j.at(0).is_array())
    throw ValidationError(path + ": expected a 2-d array");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j.at(i);
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw ValidationError(path + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = require_number(row.at(c), path);
  }
  return m;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["temperature_k"] = c.temperature_k;
  j["measurement_noise_psd"] = c.measurement_noise_psd;
  j["modes"] = json::array();
  for (const ModeParams& m : c.modes)
    j["modes"].push_back({{"f_hz", m.f_hz},
                          {"q", m.q},
                          {"m_eff_kg", m.m_eff_kg},
                          {"b_f", m.b_f}});
  j["disturbance"] = {{"peak_freq_hz", c.disturbance.peak_freq_hz},
                      {"peak_q", c.disturbance.peak_q},
                      {"peak_gain", c.disturbance.peak_gain},
                      {"bp_low_hz", c.disturbance.bp_low_hz},
                      {"bp_high_hz", c.disturbance.bp_high_hz},
                      {"bp_gain", c.disturbance.bp_gain}};
  j["control"] = {{"enabled", c.control.enabled},
                  {"n_u", c.control.n_u},
                  {"t_exec_s", c.control.t_exec_s}};
  j["sim"] = {{"t_s", c.sim.t_s},
              {"n_samples", c.sim.n_samples},
              {"seed", c.sim.seed},
              {"stationary_start", c.sim.stationary_start}};
  j["kick"] = {{"t_p_index", c.kick.t_p_index},
               {"magnitudes", c.kick.magnitudes},
               {"trials", c.kick.trials},
               {"prior_scale", c.kick.prior_scale},
               {"mode_weights", c.kick.mode_weights}};
  j["analysis"] = {{"segment_length", c.analysis.segment_length},
                   {"overlap", c.analysis.overlap},
                   {"window", c.analysis.window},
                   {"band_low_hz", c.analysis.band_low_hz},
                   {"band_high_hz", c.analysis.band_high_hz}};
  return j;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: top level must be an object");

  ExperimentConfig c;
  c.temperature_k = number_or(j, "temperature_k", "", 300.0);
  c.measurement_noise_psd =
      number_or(j, "measurement_noise_psd", "", 0.0);

  if (!j.contains("modes") || !j.at("modes").is_array() || j.at("modes").empty())
    throw ValidationError("modes: at least one required");
  int index = 0;
  for (const json& jm : j.at("modes")) {
    const std::string path = "modes[" + std::to_string(index) + "]";
    if (!jm.is_object()) throw ValidationError(path + ": expected an object");
    ModeParams m;
    if (!jm.contains("f_hz")) throw ValidationError(path + ".f_hz: required");
    m.f_hz = require_number(jm.at("f_hz"), path + ".f_hz");
    if (!jm.contains("q")) throw ValidationError(path + ".q: required");
    m.q = require_number(jm.at("q"), path + ".q");
    if (!jm.contains("m_eff_kg"))
      throw ValidationError(path + ".m_eff_kg: required");
    m.m_eff_kg = require_number(jm.at("m_eff_kg"), path + ".m_eff_kg");
    m.b_f = number_or(jm, "b_f", path, 0.0);
    c.modes.push_back(m);
    ++index;
  }

  if (j.contains("disturbance")) {
    const json& jd = j.at("disturbance");
    DisturbanceParams d;
    d.peak_freq_hz = number_or(jd, "peak_freq_hz", "disturbance", d.peak_freq_hz);
    d.peak_q = number_or(jd, "peak_q", "disturbance", d.peak_q);
    d.peak_gain = number_or(jd, "peak_gain", "disturbance", d.peak_gain);
    d.bp_low_hz = number_or(jd, "bp_low_hz", "disturbance", d.bp_low_hz);
    d.bp_high_hz = number_or(jd, "bp_high_hz", "disturbance", d.bp_high_hz);
    d.bp_gain = number_or(jd, "bp_gain", "disturbance", d.bp_gain);
    c.disturbance = d;
  }

  if (j.contains("control")) {
    const json& jc = j.at("control");
    if (jc.contains("enabled")) {
      if (!jc.at("enabled").is_boolean())
        throw ValidationError("control.enabled: expected a boolean");
      c.control.enabled = jc.at("enabled").get<bool>();
    }
    c.control.n_u = number_or(jc, "n_u", "control", c.control.n_u);
    c.control.t_exec_s = number_or(jc, "t_exec_s", "control", c.control.t_exec_s);
    if (!(c.control.n_u > 0.0))
      throw ValidationError("control.n_u: must be > 0");
    if (!(c.control.t_exec_s > 0.0))
      throw ValidationError("control.t_exec_s: must be > 0");
  }

  if (j.contains("sim")) {
    const json& js = j.at("sim");
    c.sim.t_s = number_or(js, "t_s", "sim", c.sim.t_s);
    if (!(c.sim.t_s > 0.0)) throw ValidationError("sim.t_s: must be > 0");
    if (js.contains("n_samples")) {
      if (!js.at("n_samples").is_number_integer())
        throw ValidationError("sim.n_samples: expected an integer");
      c.sim.n_samples = js.at("n_samples").get<std::int64_t>();
      if (c.sim.n_samples < 1)
        throw ValidationError("sim.n_samples: must be >= 1");
    }
    if (js.contains("seed")) {
      if (!js.at("seed").is_number_integer() ||
          js.at("seed").get<std::int64_t>() < 0)
        throw ValidationError("sim.seed: expected a non-negative integer");
      c.sim.seed = js.at("seed").get<std::uint64_t>();
    }
    if (js.contains("stationary_start")) {
      if (!js.at("stationary_start").is_boolean())
        throw ValidationError("sim.stationary_start: expected a boolean");
      c.sim.stationary_start = js.at("stationary_start").get<bool>();
    }
  }

  if (j.contains("kick")) {
    const json& jk = j.at("kick");
    if (jk.contains("t_p_index")) {
      if (!jk.at("t_p_index").is_number_integer())
        throw ValidationError("kick.t_p_index: expected an integer");
      c.kick.t_p_index = jk.at("t_p_index").get<std::int64_t>();
    }
    if (jk.contains("magnitudes")) {
      if (!jk.at("magnitudes").is_array())
        throw ValidationError("kick.magnitudes: expected an array");
      for (const json& v : jk.at("magnitudes"))
        c.kick.magnitudes.push_back(require_number(v, "kick.magnitudes"));
    }
    if (jk.contains("trials")) {
      if (!jk.at("trials").is_number_integer() ||
          jk.at("trials").get<std::int64_t>() < 1)
        throw ValidationError("kick.trials: must be a positive integer");
      c.kick.trials = jk.at("trials").get<int>();
    }
    c.kick.prior_scale =
        number_or(jk, "prior_scale", "kick", c.kick.prior_scale);
    if (!(c.kick.prior_scale > 0.0))
      throw ValidationError("kick.prior_scale: must be > 0");
    if (jk.contains("mode_weights")) {
      if (!jk.at("mode_weights").is_array())
        throw ValidationError("kick.mode_weights: expected an array");
      for (const json& v : jk.at("mode_weights"))
        c.kick.mode_weights.push_back(require_number(v, "kick.mode_weights"));
      if (c.kick.mode_weights.size() != c.modes.size())
        throw ValidationError(
            "kick.mode_weights: length must equal the number of modes");
    }
  }

  if (j.contains("analysis")) {
    const json& ja = j.at("analysis");
    if (ja.contains("segment_length")) {
      if (!ja.at("segment_length").is_number_integer())
        throw ValidationError("analysis.segment_length: expected an integer");
      c.analysis.segment_length = ja.at("segment_length").get<int>();
    }
    c.analysis.overlap = number_or(ja, "overlap", "analysis", c.analysis.overlap);
    if (ja.contains("window")) {
      if (!ja.at("window").is_string())
        throw ValidationError("analysis.window: expected a string");
      c.analysis.window = ja.at("window").get<std::string>();
    }
    c.analysis.band_low_hz =
        number_or(ja, "band_low_hz", "analysis", c.analysis.band_low_hz);
    c.analysis.band_high_hz =
        number_or(ja, "band_high_hz", "analysis", c.analysis.band_high_hz);
  }

  // Cross-field checks; the model builder validates the physics fields.
  build_full_model(c.modes, c.disturbance, c.temperature_k,
                   c.measurement_noise_psd);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in)
    throw ValidationError("config: cannot open '" + file.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string serialize_config(const ExperimentConfig& config) {
  return config_to_json(config).dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string serialize_model(const StateSpaceModel& model,
                            const DiscreteModel& dmodel) {
  json j;
  j["continuous"] = {{"A", matrix_to_json(model.A)},
                     {"B", matrix_to_json(model.B)},
                     {"G", matrix_to_json(model.G)},
                     {"C", matrix_to_json(model.C)},
                     {"R", matrix_to_json(model.R)}};
  j["labels"] = json::array();
  for (const StateLabel& label : model.state_labels)
    j["labels"].push_back(
        {{"kind", label.kind == StateLabel::Kind::position     ? "position"
                  : label.kind == StateLabel::Kind::velocity   ? "velocity"
                                                               : "disturbance"},
         {"mode", label.mode}});
  j["modes"] = json::array();
  for (const ModeParams& m : model.modes)
    j["modes"].push_back({{"f_hz", m.f_hz},
                          {"q", m.q},
                          {"m_eff_kg", m.m_eff_kg},
                          {"b_f", m.b_f}});
  j["discrete"] = {{"A_d", matrix_to_json(dmodel.A_d)},
                   {"B_d", matrix_to_json(dmodel.B_d)},
                   {"Q_d", matrix_to_json(dmodel.Q_d)},
                   {"C", matrix_to_json(dmodel.C)},
                   {"R_d", matrix_to_json(dmodel.R_d)},
                   {"t_s", dmodel.t_s}};
  return j.dump(2);
}

void deserialize_model(const std::string& json_text, StateSpaceModel& model,
                       DiscreteModel& dmodel) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("model: JSON parse error: ") + e.what());
  }
  const json& jc = j.at("continuous");
  model.A = matrix_from_json(jc.at("A"), "continuous.A");
  model.B = matrix_from_json(jc.at("B"), "continuous.B");
  model.G = matrix_from_json(jc.at("G"), "continuous.G");
  model.C = matrix_from_json(jc.at("C"), "continuous.C");
  model.R = matrix_from_json(jc.at("R"), "continuous.R");
  model.state_labels.clear();
  for (const json& jl : j.at("labels")) {
    StateLabel label;
    const std::string kind = jl.at("kind").get<std::string>();
    label.kind = kind == "position"   ? StateLabel::Kind::position
                 : kind == "velocity" ? StateLabel::Kind::velocity
                                      : StateLabel::Kind::disturbance;
    label.mode = jl.at("mode").get<int>();
    model.state_labels.push_back(label);
  }
  model.modes.clear();
  for (const json& jm : j.at("modes")) {
    ModeParams m;
    m.f_hz = jm.at("f_hz").get<double>();
    m.q = jm.at("q").get<double>();
    m.m_eff_kg = jm.at("m_eff_kg").get<double>();
    m.b_f = jm.at("b_f").get<double>();
    model.modes.push_back(m);
  }
  const json& jd = j.at("discrete");
  dmodel.A_d = matrix_from_json(jd.at("A_d"), "discrete.A_d");
  dmodel.B_d = matrix_from_json(jd.at("B_d"), "discrete.B_d");
  dmodel.Q_d = matrix_from_json(jd.at("Q_d"), "discrete.Q_d");
  dmodel.C = matrix_from_json(jd.at("C"), "discrete.C");
  dmodel.R_d = matrix_from_json(jd.at("R_d"), "discrete.R_d");
  dmodel.t_s = jd.at("t_s").get<double>();
}

std::string serialize_gains(const RegulatorGains& gains) {
  json j;
  j["k_c"] = matrix_to_json(gains.k_c);
  j["k_f"] = matrix_to_json(gains.k_f);
  j["a_f"] = matrix_to_json(gains.a_f);
  j["a_df"] = matrix_to_json(gains.a_df);
  j["k_df"] = matrix_to_json(gains.k_df);
  j["t_exec"] = gains.t_exec;
  return j.dump(2);
}

RegulatorGains deserialize_gains(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("gains: JSON parse error: ") + e.what());
  }
  RegulatorGains g;
  g.k_c = matrix_from_json(j.at("k_c"), "k_c");
  g.k_f = matrix_from_json(j.at("k_f"), "k_f");
  g.a_f = matrix_from_json(j.at("a_f"), "a_f");
  g.a_df = matrix_from_json(j.at("a_df"), "a_df");
  g.k_df = matrix_from_json(j.at("k_df"), "k_df");
  g.t_exec = j.at("t_exec").get<double>();
  return g;
}

}  // namespace kicksense
