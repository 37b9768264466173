// SPDX-License-Identifier: Apache-2.0

#include "rhythmkit/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include <Eigen/Sparse>
#include <fftw3.h>

namespace rhythmkit {

namespace {

// --- biquad machinery -------------------------------------------------------

struct Biquad {
  double b0 = 0, b1 = 0, b2 = 0, a1 = 0, a2 = 0;  // a0 normalized to 1
};

enum class BiquadKind { kLowpass, kHighpass };

// Cookbook biquad with bilinear prewarping at fc.
Biquad design_biquad(BiquadKind kind, double fc, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Biquad s;
  if (kind == BiquadKind::kLowpass) {
    s.b0 = (1.0 - cw) / 2.0 / a0;
    s.b1 = (1.0 - cw) / a0;
    s.b2 = (1.0 - cw) / 2.0 / a0;
  } else {
    s.b0 = (1.0 + cw) / 2.0 / a0;
    s.b1 = -(1.0 + cw) / a0;
    s.b2 = (1.0 + cw) / 2.0 / a0;
  }
  s.a1 = -2.0 * cw / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

// Order-4 Butterworth = two cascaded sections; the analog prototype poles
// share the corner frequency and differ only in Q (1/(2sin(π/8)),
// 1/(2sin(3π/8))).
std::array<Biquad, 2> butterworth4(BiquadKind kind, double fc, double fs) {
  const double q1 = 1.0 / (2.0 * std::sin(std::numbers::pi / 8.0));
  const double q2 = 1.0 / (2.0 * std::sin(3.0 * std::numbers::pi / 8.0));
  return {design_biquad(kind, fc, fs, q1), design_biquad(kind, fc, fs, q2)};
}

// Transposed direct-form II, states initialized to the steady state of a
// constant input equal to the first sample (suppresses startup transients).
void biquad_filter_inplace(std::vector<double>& x, const Biquad& s) {
  if (x.empty()) return;
  const double gain_dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  const double x0 = x.front();
  const double y_ss = gain_dc * x0;
  double z2 = s.b2 * x0 - s.a2 * y_ss;
  double z1 = s.b1 * x0 - s.a1 * y_ss + z2;
  for (double& v : x) {
    const double y = s.b0 * v + z1;
    z1 = s.b1 * v - s.a1 * y + z2;
    z2 = s.b2 * v - s.a2 * y;
    v = y;
  }
}

// Forward-backward run of a cascade over an odd-reflection padded copy.
std::vector<double> filtfilt(const std::vector<double>& x, const std::array<Biquad, 2>& cascade,
                             int pad) {
  const int n = static_cast<int>(x.size());
  pad = std::min(pad, n - 1);
  std::vector<double> ext;
  ext.reserve(static_cast<std::size_t>(n + 2 * pad));
  for (int i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[static_cast<std::size_t>(i)]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (int i = 1; i <= pad; ++i)
    ext.push_back(2.0 * x.back() - x[static_cast<std::size_t>(n - 1 - i)]);

  for (const Biquad& s : cascade) biquad_filter_inplace(ext, s);
  std::reverse(ext.begin(), ext.end());
  for (const Biquad& s : cascade) biquad_filter_inplace(ext, s);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

// FFTW plan creation is not thread-safe; execution of distinct plans is.
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

PulseSignal detrend(const PulseSignal& signal, double smoothing_lambda) {
  const int n = static_cast<int>(signal.samples.size());
  if (n < 3) throw ValidationError("detrend needs at least 3 samples");
  if (smoothing_lambda < 0.0) throw ValidationError("lambda must be non-negative");

  // Build I + λ²D₂ᵀD₂ (pentadiagonal SPD) and solve for the trend.
  const double l2 = smoothing_lambda * smoothing_lambda;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(5 * n));
  for (int i = 0; i < n; ++i) triplets.emplace_back(i, i, 1.0);
  for (int r = 0; r < n - 2; ++r) {
    // Row r of D₂ has entries (1, −2, 1) at columns r, r+1, r+2; accumulate
    // the outer-product contribution λ²·dᵀd.
    const int cols[3] = {r, r + 1, r + 2};
    const double coef[3] = {1.0, -2.0, 1.0};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        triplets.emplace_back(cols[a], cols[b], l2 * coef[a] * coef[b]);
  }
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(m);
  if (solver.info() != Eigen::Success) throw ValidationError("detrend solver failed");
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = signal.samples[static_cast<std::size_t>(i)];
  const Eigen::VectorXd trend = solver.solve(x);

  PulseSignal out;
  out.fps = signal.fps;
  out.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.samples[static_cast<std::size_t>(i)] = x[i] - trend[i];
  return out;
}

PulseSignal bandpass(const PulseSignal& signal, double lo_hz, double hi_hz) {
  if (signal.fps <= 0.0) throw ValidationError("fps must be positive");
  if (!(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < signal.fps / 2.0))
    throw ValidationError("invalid band: need 0 < lo < hi < fps/2");
  if (signal.samples.size() < 2) throw ValidationError("signal too short to filter");

  // Pad by roughly three periods of the lowest passband frequency so the
  // high-pass transient settles inside the padding.
  const int pad = static_cast<int>(std::lround(3.0 * signal.fps / lo_hz));

  PulseSignal out;
  out.fps = signal.fps;
  out.samples = filtfilt(signal.samples, butterworth4(BiquadKind::kHighpass, lo_hz, signal.fps),
                         pad);
  out.samples = filtfilt(out.samples, butterworth4(BiquadKind::kLowpass, hi_hz, signal.fps), pad);
  return out;
}

HrEstimate spectral_peak_hr(const PulseSignal& signal, double lo_hz, double hi_hz) {
  const int n = static_cast<int>(signal.samples.size());
  if (signal.fps <= 0.0) throw ValidationError("fps must be positive");
  if (static_cast<double>(n) < 2.0 * signal.fps)
    throw ValidationError("need at least 2 seconds of samples");
  if (!(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < signal.fps / 2.0))
    throw ValidationError("invalid band: need 0 < lo < hi < fps/2");

  double mean = 0.0;
  for (double v : signal.samples) mean += v;
  mean /= n;
  double max_dev = 0.0;
  for (double v : signal.samples) max_dev = std::max(max_dev, std::abs(v - mean));
  if (max_dev == 0.0) throw NoPeakError("no spectral peak");

  std::size_t nfft = 8192;
  while (nfft < static_cast<std::size_t>(n)) nfft *= 2;

  std::vector<double> in(nfft, 0.0);
  for (int i = 0; i < n; ++i) in[static_cast<std::size_t>(i)] = signal.samples[i] - mean;
  std::vector<fftw_complex> spec(nfft / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in.data(), spec.data(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }

  const double bin_hz = signal.fps / static_cast<double>(nfft);
  const std::size_t k_lo =
      static_cast<std::size_t>(std::max(1.0, std::ceil(lo_hz / bin_hz)));
  const std::size_t k_hi =
      std::min(nfft / 2, static_cast<std::size_t>(std::floor(hi_hz / bin_hz)));
  if (k_lo > k_hi) throw ValidationError("band narrower than one frequency bin");

  std::vector<double> power(nfft / 2 + 1, 0.0);
  for (std::size_t k = 0; k < power.size(); ++k)
    power[k] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];

  std::size_t k_peak = k_lo;
  for (std::size_t k = k_lo; k <= k_hi; ++k)
    if (power[k] > power[k_peak]) k_peak = k;
  if (power[k_peak] == 0.0) throw NoPeakError("no spectral peak");

  // Parabolic refinement over magnitudes of the peak bin and its neighbors.
  double delta = 0.0;
  if (k_peak > 0 && k_peak < nfft / 2) {
    const double m0 = std::sqrt(power[k_peak - 1]);
    const double m1 = std::sqrt(power[k_peak]);
    const double m2 = std::sqrt(power[k_peak + 1]);
    const double denom = m0 - 2.0 * m1 + m2;
    if (denom != 0.0) delta = std::clamp(0.5 * (m0 - m2) / denom, -0.5, 0.5);
  }
  const double f_star = (static_cast<double>(k_peak) + delta) * bin_hz;

  // Quality index: power within ±0.2 Hz of the peak against the rest of the
  // band.
  double peak_power = 0.0, rest_power = 0.0;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (std::abs(f - f_star) <= 0.2) peak_power += power[k];
    else rest_power += power[k];
  }

  HrEstimate est;
  est.hr_bpm = 60.0 * f_star;
  if (rest_power > 0.0 && peak_power > 0.0)
    est.snr_db = 10.0 * std::log10(peak_power / rest_power);
  return est;
}

}  // namespace rhythmkit
