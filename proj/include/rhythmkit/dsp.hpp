// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "rhythmkit/stmap.hpp"
#include "rhythmkit/types.hpp"

namespace rhythmkit {

// Uniformly sampled scalar pulse trace.
struct PulseSignal {
  std::vector<double> samples;
  double fps = 0.0;
};

// One heart-rate reading with an optional spectral quality index.
struct HrEstimate {
  double hr_bpm = 0.0;
  std::optional<double> snr_db;
  ClipWindow clip;
};

// Pass band used throughout: 0.7–2.5 Hz covers 42–150 bpm with margin.
inline constexpr double kBandLoHz = 0.7;
inline constexpr double kBandHiHz = 2.5;

// Detrend smoothing parameter at the 30 fps reference rate; scaled
// quadratically with the actual rate so the cutoff stays at the same
// physical frequency.
inline constexpr double kDetrendLambda30 = 300.0;

inline double detrend_lambda_for_fps(double fps) {
  return kDetrendLambda30 * (fps / 30.0) * (fps / 30.0);
}

// Smoothness-priors detrending: returns x − (I + λ²D₂ᵀD₂)⁻¹x with D₂ the
// second-difference operator. Throws ValidationError for fewer than 3
// samples.
PulseSignal detrend(const PulseSignal& signal, double smoothing_lambda);

// Zero-phase band-pass: forward-backward order-4 Butterworth high-pass at
// lo_hz followed by the matching low-pass at hi_hz (biquad cascades,
// odd-reflection padding, steady-state initial conditions). Throws
// ValidationError unless 0 < lo_hz < hi_hz < fps/2.
PulseSignal bandpass(const PulseSignal& signal, double lo_hz = kBandLoHz,
                     double hi_hz = kBandHiHz);

// Spectral-peak heart rate: mean-removed signal, FFT zero-padded to ≥ 8192
// bins, strongest in-band magnitude bin refined by 3-point parabolic
// interpolation; hr_bpm = 60·f*. snr_db is the ratio of power within
// ±0.2 Hz of the peak to the remaining in-band power. Throws NoPeakError
// for signals with no temporal variation and ValidationError for fewer
// than 2 seconds of samples or an invalid band.
HrEstimate spectral_peak_hr(const PulseSignal& signal, double lo_hz = kBandLoHz,
                            double hi_hz = kBandHiHz);

}  // namespace rhythmkit
