#pragma once

#include <Eigen/Dense>
#include <vector>

namespace kicksense {

/// Boltzmann constant [J/K], exact SI value.
inline constexpr double kBoltzmann = 1.380649e-23;

/// Parameters of one mechanical mode.
struct ModeParams {
  double f_hz;       ///< resonance frequency [Hz]
  double q;          ///< quality factor, dimensionless
  double m_eff_kg;   ///< effective mass [kg]
  double b_f = 0.0;  ///< actuation gain [N/V], 0 means no actuation on this mode
};

/// Parameters of the two-block disturbance model: a weakly damped spectral
/// peak plus a broadband band-pass floor, both entering the measured output.
struct DisturbanceParams {
  double peak_freq_hz = 21.0e3;  ///< center of the narrow disturbance peak [Hz]
  double peak_q = 1000.0;        ///< quality factor of the peak block
  double peak_gain = 0.0;        ///< white drive amplitude of the peak [m/s/sqrt(Hz)]
  double bp_low_hz = 10.0e3;     ///< band-pass lower cutoff [Hz]
  double bp_high_hz = 200.0e3;   ///< band-pass upper cutoff [Hz]
  double bp_gain = 0.0;          ///< mid-band output amplitude [m/s/sqrt(Hz)]
};

/// Semantic tag for one state variable of the stacked model.
struct StateLabel {
  enum class Kind { position, velocity, disturbance };
  Kind kind;
  int mode = -1;  ///< mode index for position/velocity states, -1 for disturbance
};

/// Continuous-time stochastic model
///   dx/dt = A x + B u + G eta,   y = C x + nu,
/// with unit-intensity white eta and E[nu nu'] = R delta(t-t'). G and R are
/// stored as delta-correlation intensities; the /2 conversion from one-sided
/// physical PSDs happens when the model is built.
struct StateSpaceModel {
  Eigen::MatrixXd A;  ///< drift, n x n
  Eigen::MatrixXd B;  ///< actuation input, n x l
  Eigen::MatrixXd G;  ///< noise input, n x w
  Eigen::MatrixXd C;  ///< measurement, m_y x n
  Eigen::MatrixXd R;  ///< measurement noise intensity, m_y x m_y
  std::vector<StateLabel> state_labels;
  std::vector<ModeParams> modes;  ///< per-mode parameters, kept for unit conversions

  int n() const { return static_cast<int>(A.rows()); }
};

/// One row of a mode-shape export: displacement sample phi at a grid cell with
/// density rho and cell volume dv. Coordinates are carried through unmodified.
struct ModeShapeSample {
  double x, y, z;
  double phi;  ///< normalized displacement, dimensionless
  double rho;  ///< density [kg/m^3]
  double dv;   ///< cell volume [m^3]
};

/// One-sided thermomechanical force noise PSD [N^2/Hz] of a mode at
/// temperature T [K]: 4 kB T gamma_eff with gamma_eff = Omega m_eff / Q.
double thermomechanical_psd(const ModeParams& mode, double temperature_k);

/// Builds the 2-state block [position, velocity] of a single mode, including
/// its thermomechanical noise column at the given temperature. The returned
/// model has no measurement noise (R = 0) and C reads the velocity.
StateSpaceModel build_mode_system(const ModeParams& mode, double temperature_k);

/// Stacks k mode blocks plus the two disturbance blocks into the full model
/// (n = 2k + 4). The single output row sums all mode velocities and both
/// disturbance outputs; R is the measurement intensity corresponding to the
/// one-sided PSD `measurement_noise_psd` [(m/s)^2/Hz].
StateSpaceModel build_full_model(const std::vector<ModeParams>& modes,
                                 const DisturbanceParams& disturbance,
                                 double temperature_k,
                                 double measurement_noise_psd);

/// Effective mass by quadrature over a mode shape: sum |phi|^2 rho dv [kg].
double effective_mass(const std::vector<ModeShapeSample>& shape);

/// Actuation gain [N/V] from a frequency-response calibration:
/// b_F = A_out Q / (A_in C_m Omega), with C_m the displacement-to-output
/// transduction factor of the readout.
double force_calibration(double a_out, double a_in, double q, double c_m,
                         double omega);

/// One-sided PSD of the model output [(m/s)^2/Hz] evaluated at the given
/// frequencies [Hz]: 2 |C (iw I - A)^-1 G|^2 + 2 R. Closed-loop effects are
/// not included; this is the open-loop spectrum used for sanity checks.
std::vector<double> analytic_output_psd(const StateSpaceModel& model,
                                        const std::vector<double>& freqs_hz);

}  // namespace kicksense
