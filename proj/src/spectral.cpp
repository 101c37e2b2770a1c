#include "kicksense/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <fftw3.h>
#include <omp.h>

#include "kicksense/errors.hpp"

namespace kicksense {

namespace {

std::vector<double> make_window(const std::string& name, int length) {
  std::vector<double> w(length, 1.0);
  if (name == "hann") {
    for (int i = 0; i < length; ++i)
      w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / length));
  } else if (name != "rect") {
    throw ValidationError("welch: unknown window '" + name + "'");
  }
  return w;
}

}  // namespace

PsdEstimate welch_psd(std::span<const double> x, double f_s,
                      const WelchOptions& opts) {
  if (!(f_s > 0.0)) throw ValidationError("welch: f_s must be > 0");
  const int seg = opts.segment_length;
  if (seg < 2 || (seg & (seg - 1)) != 0)
    throw ValidationError("welch: segment_length must be a power of two >= 2");
  if (!(opts.overlap >= 0.0 && opts.overlap < 1.0))
    throw ValidationError("welch: overlap must be in [0, 1)");
  if (x.size() < static_cast<std::size_t>(seg))
    throw ValidationError("welch: signal shorter than one segment");

  const int hop = std::max(1, static_cast<int>(seg * (1.0 - opts.overlap)));
  const std::int64_t n_segments = 1 + (x.size() - seg) / hop;
  const int n_bins = seg / 2 + 1;

  const std::vector<double> window = make_window(opts.window, seg);
  double window_power = 0.0;
  for (double w : window) window_power += w * w;

  // Per-segment periodograms land in their own rows; the average is taken in
  // index order afterwards so the result is independent of thread scheduling.
  std::vector<double> periodograms(n_segments * n_bins);

  const int threads = opts.threads > 0 ? opts.threads : omp_get_max_threads();
#pragma omp parallel num_threads(threads)
  {
    double* in = fftw_alloc_real(seg);
    fftw_complex* out = fftw_alloc_complex(n_bins);
    fftw_plan plan = nullptr;
#pragma omp critical(kicksense_fftw_plan)
    plan = fftw_plan_dft_r2c_1d(seg, in, out, FFTW_ESTIMATE);

#pragma omp for schedule(static)
    for (std::int64_t s = 0; s < n_segments; ++s) {
      const double* src = x.data() + s * hop;
      for (int i = 0; i < seg; ++i) in[i] = src[i] * window[i];
      fftw_execute(plan);
      double* dst = periodograms.data() + s * n_bins;
      for (int j = 0; j < n_bins; ++j)
        dst[j] = out[j][0] * out[j][0] + out[j][1] * out[j][1];
    }

#pragma omp critical(kicksense_fftw_plan)
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }

  PsdEstimate psd;
  psd.segment_length = seg;
  psd.overlap = opts.overlap;
  psd.window = opts.window;
  psd.freqs_hz.resize(n_bins);
  psd.values.assign(n_bins, 0.0);
  for (std::int64_t s = 0; s < n_segments; ++s)
    for (int j = 0; j < n_bins; ++j)
      psd.values[j] += periodograms[s * n_bins + j];

  // One-sided normalization: 2 / (f_s sum w^2), no doubling at DC/Nyquist.
  const double scale = 1.0 / (f_s * window_power * n_segments);
  for (int j = 0; j < n_bins; ++j) {
    psd.freqs_hz[j] = f_s * j / seg;
    psd.values[j] *= (j == 0 || j == n_bins - 1) ? scale : 2.0 * scale;
  }
  return psd;
}

std::vector<double> autocorrelation(std::span<const double> x, int max_lag,
                                    int threads) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (max_lag < 1) throw ValidationError("autocorrelation: max_lag must be >= 1");
  if (n <= max_lag)
    throw ValidationError("autocorrelation: signal shorter than max_lag");

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;

  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0))
    throw ValidationError("autocorrelation: signal has zero variance");

  std::vector<double> rho(max_lag);
  const int num_threads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(num_threads)
  for (int lag = 1; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (std::int64_t i = 0; i + lag < n; ++i)
      acc += (x[i] - mean) * (x[i + lag] - mean);
    rho[lag - 1] = acc / (n * var);
  }
  return rho;
}

WhitenessResult whiteness_test(std::span<const double> innovations, double f_s,
                               const WhitenessOptions& opts) {
  WhitenessResult res;
  const std::int64_t n = static_cast<std::int64_t>(innovations.size());
  const std::vector<double> rho =
      autocorrelation(innovations, opts.max_lag, opts.welch.threads);

  const double bound = opts.lag_threshold_sigma / std::sqrt(double(n));
  int within = 0;
  for (double r : rho) {
    res.max_abs_autocorr = std::max(res.max_abs_autocorr, std::abs(r));
    if (std::abs(r) <= bound) ++within;
  }
  res.lag_pass_fraction = double(within) / opts.max_lag;
  res.lags_pass = res.lag_pass_fraction >= opts.min_pass_fraction;

  WelchOptions welch = opts.welch;
  while (welch.segment_length > 2 &&
         innovations.size() < static_cast<std::size_t>(welch.segment_length))
    welch.segment_length /= 2;
  const PsdEstimate psd = welch_psd(innovations, f_s, welch);

  std::vector<double> band;
  for (std::size_t j = 0; j < psd.freqs_hz.size(); ++j)
    if (psd.freqs_hz[j] >= opts.band_low_hz && psd.freqs_hz[j] <= opts.band_high_hz)
      band.push_back(psd.values[j]);
  if (band.size() < 2)
    throw ValidationError("whiteness: band contains fewer than two PSD bins");

  std::vector<double> sorted = band;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                   sorted.end());
  const double median = sorted[sorted.size() / 2];
  if (!(median > 0.0))
    throw NumericalError("whiteness: non-positive band median");
  for (double v : band) {
    const double dev = std::abs(10.0 * std::log10(v / median));
    res.max_band_deviation_db = std::max(res.max_band_deviation_db, dev);
  }
  res.flatness_pass = res.max_band_deviation_db <= opts.flatness_db;
  res.pass = res.lags_pass && res.flatness_pass;
  return res;
}

EnsembleStats ensemble_stats(std::span<const double> applied,
                             std::span<const double> estimated) {
  if (applied.size() != estimated.size())
    throw ValidationError("ensemble_stats: length mismatch");
  if (applied.empty()) throw ValidationError("ensemble_stats: empty input");

  std::map<double, std::vector<double>> by_magnitude;
  for (std::size_t i = 0; i < applied.size(); ++i)
    by_magnitude[applied[i]].push_back(estimated[i]);
  if (by_magnitude.size() < 2)
    throw ValidationError(
        "ensemble_stats: need at least two distinct applied magnitudes");

  EnsembleStats stats;
  for (const auto& [magnitude, values] : by_magnitude) {
    GroupStats g;
    g.magnitude = magnitude;
    g.n = static_cast<int>(values.size());
    for (double v : values) g.mean += v;
    g.mean /= g.n;
    if (g.n > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - g.mean) * (v - g.mean);
      g.stddev = std::sqrt(ss / (g.n - 1));
    }
    stats.groups.push_back(g);
  }

  double mean_a = 0.0, mean_e = 0.0;
  for (std::size_t i = 0; i < applied.size(); ++i) {
    mean_a += applied[i];
    mean_e += estimated[i];
  }
  mean_a /= applied.size();
  mean_e /= applied.size();
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < applied.size(); ++i) {
    sxx += (applied[i] - mean_a) * (applied[i] - mean_a);
    sxy += (applied[i] - mean_a) * (estimated[i] - mean_e);
  }
  stats.slope = sxy / sxx;
  stats.intercept = mean_e - stats.slope * mean_a;
  return stats;
}

}  // namespace kicksense
