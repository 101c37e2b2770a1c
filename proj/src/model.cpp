#include "kicksense/model.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "kicksense/errors.hpp"

namespace kicksense {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void validate_mode(const ModeParams& mode, int index) {
  const std::string where = "modes[" + std::to_string(index) + "].";
  if (!(mode.f_hz > 0.0)) throw ValidationError(where + "f_hz: must be > 0");
  if (!(mode.q > 0.0)) throw ValidationError(where + "q: must be > 0");
  if (!(mode.m_eff_kg > 0.0))
    throw ValidationError(where + "m_eff_kg: must be > 0");
  if (!std::isfinite(mode.b_f))
    throw ValidationError(where + "b_f: must be finite");
}

void validate_temperature(double temperature_k) {
  if (!(temperature_k >= 0.0) || !std::isfinite(temperature_k))
    throw ValidationError("temperature_k: must be >= 0");
}

}  // namespace

double thermomechanical_psd(const ModeParams& mode, double temperature_k) {
  validate_mode(mode, 0);
  validate_temperature(temperature_k);
  const double omega = kTwoPi * mode.f_hz;
  const double gamma_eff = omega * mode.m_eff_kg / mode.q;
  return 4.0 * kBoltzmann * temperature_k * gamma_eff;
}

StateSpaceModel build_mode_system(const ModeParams& mode, double temperature_k) {
  validate_mode(mode, 0);
  validate_temperature(temperature_k);

  const double omega = kTwoPi * mode.f_hz;
  const double s_force = thermomechanical_psd(mode, temperature_k);

  StateSpaceModel sys;
  sys.A.setZero(2, 2);
  sys.A(0, 1) = 1.0;
  sys.A(1, 0) = -omega * omega;
  sys.A(1, 1) = -omega / mode.q;

  sys.B.setZero(2, 1);
  sys.B(1, 0) = mode.b_f / mode.m_eff_kg;

  // One-sided force PSD to acceleration-noise intensity: /2 then /m_eff.
  sys.G.setZero(2, 1);
  sys.G(1, 0) = std::sqrt(s_force / 2.0) / mode.m_eff_kg;

  sys.C.setZero(1, 2);
  sys.C(0, 1) = 1.0;
  sys.R.setZero(1, 1);

  sys.state_labels = {{StateLabel::Kind::position, 0},
                      {StateLabel::Kind::velocity, 0}};
  sys.modes = {mode};
  return sys;
}

StateSpaceModel build_full_model(const std::vector<ModeParams>& modes,
                                 const DisturbanceParams& d,
                                 double temperature_k,
                                 double measurement_noise_psd) {
  if (modes.empty()) throw ValidationError("modes: at least one required");
  for (int i = 0; i < static_cast<int>(modes.size()); ++i)
    validate_mode(modes[i], i);
  validate_temperature(temperature_k);
  if (!(measurement_noise_psd >= 0.0))
    throw ValidationError("measurement_noise_psd: must be >= 0");
  if (!(d.peak_freq_hz > 0.0))
    throw ValidationError("disturbance.peak_freq_hz: must be > 0");
  if (!(d.peak_q > 0.0)) throw ValidationError("disturbance.peak_q: must be > 0");
  if (!(d.bp_low_hz > 0.0) || !(d.bp_high_hz > d.bp_low_hz))
    throw ValidationError("disturbance: need 0 < bp_low_hz < bp_high_hz");
  if (!(d.peak_gain >= 0.0) || !(d.bp_gain >= 0.0))
    throw ValidationError("disturbance: gains must be >= 0");

  const int k = static_cast<int>(modes.size());
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (std::abs(modes[i].f_hz - modes[j].f_hz) <=
          1e-6 * std::max(modes[i].f_hz, modes[j].f_hz))
        throw ValidationError("modes[" + std::to_string(j) +
                              "].f_hz: duplicate resonance frequency");

  const int n = 2 * k + 4;
  StateSpaceModel sys;
  sys.A.setZero(n, n);
  sys.B.setZero(n, 1);
  sys.G.setZero(n, k + 2);  // one noise channel per mode, one per disturbance block
  sys.C.setZero(1, n);
  sys.R.setZero(1, 1);
  sys.R(0, 0) = measurement_noise_psd / 2.0;
  sys.state_labels.resize(n);
  sys.modes = modes;

  for (int i = 0; i < k; ++i) {
    const StateSpaceModel block = build_mode_system(modes[i], temperature_k);
    const int r = 2 * i;
    sys.A.block<2, 2>(r, r) = block.A;
    sys.B.block<2, 1>(r, 0) = block.B;
    sys.G.block<2, 1>(r, i) = block.G;
    sys.C(0, r + 1) = 1.0;
    sys.state_labels[r] = {StateLabel::Kind::position, i};
    sys.state_labels[r + 1] = {StateLabel::Kind::velocity, i};
  }

  // Narrow disturbance peak: a unit resonator whose velocity-like state feeds
  // the output directly, so the output peak PSD is peak_gain^2 (Q_p/omega_p)^2.
  {
    const int r = 2 * k;
    const double wp = kTwoPi * d.peak_freq_hz;
    sys.A(r, r + 1) = 1.0;
    sys.A(r + 1, r) = -wp * wp;
    sys.A(r + 1, r + 1) = -wp / d.peak_q;
    sys.G(r + 1, k) = d.peak_gain / std::numbers::sqrt2;
    sys.C(0, r + 1) = 1.0;
    sys.state_labels[r] = {StateLabel::Kind::disturbance, -1};
    sys.state_labels[r + 1] = {StateLabel::Kind::disturbance, -1};
  }

  // Broadband floor: second-order band-pass with real poles at the two
  // cutoffs, C scaled for unity mid-band gain so the mid-band output PSD is
  // bp_gain^2.
  {
    const int r = 2 * k + 2;
    const double wl = kTwoPi * d.bp_low_hz;
    const double wh = kTwoPi * d.bp_high_hz;
    sys.A(r, r + 1) = 1.0;
    sys.A(r + 1, r) = -wl * wh;
    sys.A(r + 1, r + 1) = -(wl + wh);
    sys.G(r + 1, k + 1) = d.bp_gain / std::numbers::sqrt2;
    sys.C(0, r + 1) = wl + wh;
    sys.state_labels[r] = {StateLabel::Kind::disturbance, -1};
    sys.state_labels[r + 1] = {StateLabel::Kind::disturbance, -1};
  }

  return sys;
}

double effective_mass(const std::vector<ModeShapeSample>& shape) {
  if (shape.empty()) throw ValidationError("mode shape: no samples");
  double m = 0.0;
  for (const auto& s : shape) {
    if (!(s.rho >= 0.0) || !(s.dv >= 0.0) || !std::isfinite(s.phi))
      throw ValidationError("mode shape: rho and dv must be >= 0, phi finite");
    m += s.phi * s.phi * s.rho * s.dv;
  }
  return m;
}

double force_calibration(double a_out, double a_in, double q, double c_m,
                         double omega) {
  if (!(a_in > 0.0)) throw ValidationError("calibration: a_in must be > 0");
  if (!(q > 0.0)) throw ValidationError("calibration: q must be > 0");
  if (!(c_m > 0.0)) throw ValidationError("calibration: c_m must be > 0");
  if (!(omega > 0.0)) throw ValidationError("calibration: omega must be > 0");
  return a_out * q / (a_in * c_m * omega);
}

std::vector<double> analytic_output_psd(const StateSpaceModel& model,
                                        const std::vector<double>& freqs_hz) {
  const int n = model.n();
  std::vector<double> psd(freqs_hz.size());
  const Eigen::MatrixXcd a = model.A.cast<std::complex<double>>();
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    const std::complex<double> jw(0.0, kTwoPi * freqs_hz[i]);
    Eigen::MatrixXcd shifted = -a;
    shifted.diagonal().array() += jw;
    const Eigen::MatrixXcd h =
        model.C.cast<std::complex<double>>() *
        shifted.partialPivLu().solve(model.G.cast<std::complex<double>>());
    psd[i] = 2.0 * (h.squaredNorm() + model.R(0, 0));
  }
  return psd;
}

}  // namespace kicksense
