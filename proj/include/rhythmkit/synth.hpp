// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rhythmkit/dsp.hpp"
#include "rhythmkit/stmap.hpp"
#include "rhythmkit/types.hpp"

namespace rhythmkit {

// Recipe for a synthetic pulse recording with exactly known ground truth.
// All modulation strengths (pulse amplitude, drift amplitude, motion and
// sensor noise σ) are fractions of the base intensity, so they share one
// unit system.
struct SynthSpec {
  // Piecewise-linear HR trajectory as (time_s, hr_bpm) knots, time
  // ascending. A single knot means constant HR.
  std::vector<std::pair<double, double>> hr_knots{{0.0, 72.0}};
  double fps = 30.0;
  double duration_s = 10.0;
  double amplitude = 0.02;      // pulse modulation depth
  double harmonic_ratio = 0.3;  // 2nd harmonic / fundamental
  double drift_freq_hz = 0.0;   // illumination drift
  double drift_amp = 0.0;
  double motion_sigma = 0.0;  // per-block, shared across channels
  double sensor_sigma = 0.0;  // per-sample, per-channel
  std::uint64_t seed = 0;

  static SynthSpec constant_hr(double hr_bpm) {
    SynthSpec s;
    s.hr_knots = {{0.0, hr_bpm}};
    return s;
  }

  // Throws ValidationError unless HR stays within [42, 150] bpm, all
  // amplitudes are non-negative, and fps > 2× the highest pulse frequency.
  void validate() const;

  // Instantaneous HR at time t (clamped to the knot range).
  double hr_at(double t_s) const;

  // Accumulated pulse phase φ(t) = 2π ∫₀ᵗ f(τ) dτ in radians (exact for the
  // piecewise-linear trajectory).
  double phase_at(double t_s) const;

  // Trajectory mean over [t0, t1]: (φ(t1) − φ(t0)) / (2π·(t1−t0)) × 60.
  double mean_hr(double t0_s, double t1_s) const;
};

// Key/value text form of SynthSpec. Recognized keys: hr_bpm (single value)
// or hr_knots (comma-separated `time:hr` pairs), fps, duration_s, amplitude,
// harmonic_ratio, drift_freq_hz, drift_amp, motion_sigma, sensor_sigma,
// seed.
SynthSpec load_synth_spec(const std::string& path);
void write_synth_spec(const SynthSpec& spec, const std::string& path);

// Scalar pulse: sin(φ) + harmonic·sin(2φ) + drift + sensor noise.
// Deterministic under the spec seed.
PulseSignal gen_pulse_trace(const SynthSpec& spec);

// Raw block traces: per-block base color modulated by the pulse with
// per-channel depths (R,G,B) = (0.5, 1.0, 0.7)×amplitude (single channel
// uses 1.0×), plus shared drift, per-block motion noise and per-sample
// sensor noise.
BlockTraces gen_synthetic_traces(const SynthSpec& spec, int n_blocks, int channels);

// Traces normalized through the standard map path; the clip label is the
// exact trajectory mean over the sampled span.
SpatialTemporalMap gen_synthetic_stmap(const SynthSpec& spec, int n_blocks, int channels,
                                       ColorSpace colorspace = ColorSpace::kYuv);

// Full ingest-layout fixture: a skin-tone rectangle pulsing inside a dark
// background, a static 81-point landmark layout matching the default schema,
// timestamps at the spec fps, and a 1 Hz ground-truth trace. Throws
// ValidationError for sizes below 32×32.
struct SynthVideo {
  FrameSequence sequence;
  LandmarkTrack landmarks;
  GroundTruthTrace ground_truth;
};
SynthVideo gen_synthetic_frames(const SynthSpec& spec, int height, int width);

}  // namespace rhythmkit
