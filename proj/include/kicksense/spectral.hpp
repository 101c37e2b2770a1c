#pragma once

#include <span>
#include <string>
#include <vector>

namespace kicksense {

/// One-sided PSD estimate. values[j] is in input-units^2/Hz at freqs_hz[j];
/// sum(values) * f_s / segment_length recovers the signal variance.
struct PsdEstimate {
  std::vector<double> freqs_hz;
  std::vector<double> values;
  int segment_length = 0;
  double overlap = 0.5;
  std::string window = "hann";
};

struct WelchOptions {
  int segment_length = 1 << 16;
  double overlap = 0.5;       ///< fraction of segment_length, in [0, 1)
  std::string window = "hann";  ///< "hann" or "rect"
  int threads = 0;            ///< OpenMP threads over segments; 0 = default, 1 = serial
};

/// Welch averaged periodogram. Segment results are accumulated in index
/// order, so serial and parallel runs return bit-identical values.
PsdEstimate welch_psd(std::span<const double> x, double f_s,
                      const WelchOptions& opts = {});

/// Biased (1/N) sample autocorrelation at lags 1..max_lag, normalized by the
/// lag-0 value.
std::vector<double> autocorrelation(std::span<const double> x, int max_lag,
                                    int threads = 0);

struct WhitenessOptions {
  int max_lag = 100;
  double lag_threshold_sigma = 3.0;  ///< per-lag bound in units of 1/sqrt(N)
  double min_pass_fraction = 0.95;
  double band_low_hz = 10e3;
  double band_high_hz = 130e3;
  double flatness_db = 3.0;
  WelchOptions welch;
};

struct WhitenessResult {
  bool pass = false;
  bool lags_pass = false;
  bool flatness_pass = false;
  double max_abs_autocorr = 0.0;
  double lag_pass_fraction = 0.0;
  /// Largest in-band deviation of the PSD from its band median [dB].
  double max_band_deviation_db = 0.0;
};

/// Innovation whiteness: autocorrelation at lags 1..max_lag must stay within
/// the threshold for the required fraction of lags, and the PSD must be flat
/// within flatness_db across the band.
WhitenessResult whiteness_test(std::span<const double> innovations, double f_s,
                               const WhitenessOptions& opts = {});

struct GroupStats {
  double magnitude = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  ///< n-1 normalization
  int n = 0;
};

struct EnsembleStats {
  std::vector<GroupStats> groups;  ///< per distinct applied magnitude, in order
  double slope = 0.0;              ///< least squares estimated-vs-applied
  double intercept = 0.0;
};

/// Per-magnitude mean/std plus a global regression of estimated against
/// applied values. Requires at least two distinct applied magnitudes for the
/// regression. Results are invariant under permutation of the input pairs.
EnsembleStats ensemble_stats(std::span<const double> applied,
                             std::span<const double> estimated);

}  // namespace kicksense
