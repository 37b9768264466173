// SPDX-License-Identifier: Apache-2.0

#include "rhythmkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "rhythmkit/rng.hpp"

namespace rhythmkit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Per-channel pulse depth multipliers, green strongest.
constexpr double kChannelDepth[3] = {0.5, 1.0, 0.7};

// Base skin tone of the synthetic patch.
constexpr double kBaseColor[3] = {200.0, 140.0, 120.0};

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_num(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("non-numeric value for '" + key + "': '" + s + "'");
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (hr_knots.empty()) throw ValidationError("hr trajectory is empty");
  double hr_max = 0.0;
  double prev_t = -std::numeric_limits<double>::infinity();
  for (const auto& [t, hr] : hr_knots) {
    if (!(t >= prev_t)) throw ValidationError("hr knot times must be ascending");
    if (hr < 42.0 || hr > 150.0)
      throw ValidationError("hr outside [42, 150] bpm");
    hr_max = std::max(hr_max, hr);
    prev_t = t;
  }
  if (fps <= 0.0 || duration_s <= 0.0) throw ValidationError("fps and duration must be positive");
  if (amplitude < 0.0 || harmonic_ratio < 0.0 || drift_amp < 0.0 || motion_sigma < 0.0 ||
      sensor_sigma < 0.0)
    throw ValidationError("amplitudes must be non-negative");
  if (drift_freq_hz < 0.0) throw ValidationError("drift frequency must be non-negative");
  if (fps <= 2.0 * hr_max / 60.0) throw ValidationError("fps below Nyquist for the pulse");
}

double SynthSpec::hr_at(double t_s) const {
  if (hr_knots.empty()) throw ValidationError("hr trajectory is empty");
  if (t_s <= hr_knots.front().first) return hr_knots.front().second;
  if (t_s >= hr_knots.back().first) return hr_knots.back().second;
  for (std::size_t i = 1; i < hr_knots.size(); ++i) {
    if (t_s <= hr_knots[i].first) {
      const auto& [t0, h0] = hr_knots[i - 1];
      const auto& [t1, h1] = hr_knots[i];
      if (t1 == t0) return h1;
      const double w = (t_s - t0) / (t1 - t0);
      return (1.0 - w) * h0 + w * h1;
    }
  }
  return hr_knots.back().second;
}

double SynthSpec::phase_at(double t_s) const {
  // Integrate f(τ) = hr(τ)/60 segment by segment; the trapezoid rule is
  // exact on linear segments.
  double phase = 0.0;
  double t_prev = 0.0;
  double f_prev = hr_at(0.0) / 60.0;
  for (const auto& [tk, hk] : hr_knots) {
    if (tk <= t_prev) continue;
    const double t_seg = std::min(tk, t_s);
    if (t_seg > t_prev) {
      const double f_seg = hr_at(t_seg) / 60.0;
      phase += kTwoPi * 0.5 * (f_prev + f_seg) * (t_seg - t_prev);
      t_prev = t_seg;
      f_prev = f_seg;
    }
    if (tk >= t_s) break;
  }
  if (t_s > t_prev) phase += kTwoPi * (hr_knots.back().second / 60.0) * (t_s - t_prev);
  return phase;
}

double SynthSpec::mean_hr(double t0_s, double t1_s) const {
  if (t1_s <= t0_s) return hr_at(t0_s);
  return (phase_at(t1_s) - phase_at(t0_s)) / (kTwoPi * (t1_s - t0_s)) * 60.0;
}

SynthSpec load_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file: " + path);
  SynthSpec spec;
  std::string line;
  while (std::getline(in, line)) {
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw ValidationError("spec line missing '=': " + stripped);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key == "hr_bpm") {
      spec.hr_knots = {{0.0, parse_num(value, key)}};
    } else if (key == "hr_knots") {
      spec.hr_knots.clear();
      std::stringstream pairs(value);
      std::string tok;
      while (std::getline(pairs, tok, ',')) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos)
          throw ValidationError("hr_knots entries must be time:hr, got '" + tok + "'");
        spec.hr_knots.emplace_back(parse_num(trim(tok.substr(0, colon)), key),
                                   parse_num(trim(tok.substr(colon + 1)), key));
      }
    } else if (key == "fps") {
      spec.fps = parse_num(value, key);
    } else if (key == "duration_s") {
      spec.duration_s = parse_num(value, key);
    } else if (key == "amplitude") {
      spec.amplitude = parse_num(value, key);
    } else if (key == "harmonic_ratio") {
      spec.harmonic_ratio = parse_num(value, key);
    } else if (key == "drift_freq_hz") {
      spec.drift_freq_hz = parse_num(value, key);
    } else if (key == "drift_amp") {
      spec.drift_amp = parse_num(value, key);
    } else if (key == "motion_sigma") {
      spec.motion_sigma = parse_num(value, key);
    } else if (key == "sensor_sigma") {
      spec.sensor_sigma = parse_num(value, key);
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(parse_num(value, key));
    } else {
      throw ValidationError("unknown spec key: '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

void write_synth_spec(const SynthSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "hr_knots=";
  for (std::size_t i = 0; i < spec.hr_knots.size(); ++i) {
    if (i) out << ",";
    out << spec.hr_knots[i].first << ":" << spec.hr_knots[i].second;
  }
  out << "\n";
  out << "fps=" << spec.fps << "\n";
  out << "duration_s=" << spec.duration_s << "\n";
  out << "amplitude=" << spec.amplitude << "\n";
  out << "harmonic_ratio=" << spec.harmonic_ratio << "\n";
  out << "drift_freq_hz=" << spec.drift_freq_hz << "\n";
  out << "drift_amp=" << spec.drift_amp << "\n";
  out << "motion_sigma=" << spec.motion_sigma << "\n";
  out << "sensor_sigma=" << spec.sensor_sigma << "\n";
  out << "seed=" << spec.seed << "\n";
}

PulseSignal gen_pulse_trace(const SynthSpec& spec) {
  spec.validate();
  const int n = static_cast<int>(std::lround(spec.duration_s * spec.fps));
  if (n < 1) throw ValidationError("duration too short for one sample");
  Rng rng(spec.seed);
  PulseSignal s;
  s.fps = spec.fps;
  s.samples.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / spec.fps;
    const double phi = spec.phase_at(t);
    double v = spec.amplitude * (std::sin(phi) + spec.harmonic_ratio * std::sin(2.0 * phi));
    v += spec.drift_amp * std::sin(kTwoPi * spec.drift_freq_hz * t);
    v += spec.sensor_sigma * rng.gauss();
    s.samples[static_cast<std::size_t>(k)] = v;
  }
  return s;
}

BlockTraces gen_synthetic_traces(const SynthSpec& spec, int n_blocks, int channels) {
  spec.validate();
  if (n_blocks < 1) throw ValidationError("need at least one block");
  if (channels != 1 && channels != 3) throw ValidationError("channels must be 1 or 3");
  const int T = static_cast<int>(std::lround(spec.duration_s * spec.fps));
  if (T < 1) throw ValidationError("duration too short for one sample");

  BlockTraces traces;
  traces.t_frames = T;
  traces.n_blocks = n_blocks;
  traces.channels = channels;
  traces.fps = spec.fps;
  traces.data.assign(static_cast<std::size_t>(T) * n_blocks * channels, 0.0);

  Rng motion_rng = Rng(spec.seed).fork(1);
  Rng sensor_rng = Rng(spec.seed).fork(2);

  for (int t = 0; t < T; ++t) {
    const double ts = static_cast<double>(t) / spec.fps;
    const double phi = spec.phase_at(ts);
    const double pulse = std::sin(phi) + spec.harmonic_ratio * std::sin(2.0 * phi);
    const double drift = spec.drift_amp * std::sin(kTwoPi * spec.drift_freq_hz * ts);
    for (int b = 0; b < n_blocks; ++b) {
      const double motion = spec.motion_sigma * motion_rng.gauss();
      for (int c = 0; c < channels; ++c) {
        const double base = (channels == 3) ? kBaseColor[c] : kBaseColor[1];
        const double depth = (channels == 3) ? kChannelDepth[c] : 1.0;
        const double sensor = spec.sensor_sigma * sensor_rng.gauss();
        traces.at(t, b, c) =
            base * (1.0 + depth * spec.amplitude * pulse + drift + motion + sensor);
      }
    }
  }
  return traces;
}

SpatialTemporalMap gen_synthetic_stmap(const SynthSpec& spec, int n_blocks, int channels,
                                       ColorSpace colorspace) {
  const BlockTraces traces = gen_synthetic_traces(spec, n_blocks, channels);
  SpatialTemporalMap map = normalize_traces(traces, colorspace);
  map.clip.start_frame = 0;
  map.clip.length = traces.t_frames;
  map.clip.step_frames = traces.t_frames;
  const double t_last = static_cast<double>(traces.t_frames - 1) / spec.fps;
  map.clip.gt_hr_bpm = traces.t_frames > 1 ? spec.mean_hr(0.0, t_last) : spec.hr_at(0.0);
  return map;
}

SynthVideo gen_synthetic_frames(const SynthSpec& spec, int height, int width) {
  spec.validate();
  if (height < 32 || width < 32) throw ValidationError("frame size must be at least 32x32");
  const int T = static_cast<int>(std::lround(spec.duration_s * spec.fps));
  if (T < 1) throw ValidationError("duration too short for one frame");

  const double w = width, h = height;
  // Face rectangle implied by the landmark layout below: the box the
  // geometry module derives from these landmarks spans x ∈ [0.1w, 0.9w],
  // y ∈ [0.18h, 0.9h].
  const int face_x0 = static_cast<int>(std::floor(0.1 * w));
  const int face_x1 = static_cast<int>(std::ceil(0.9 * w));
  const int face_y0 = static_cast<int>(std::floor(0.18 * h));
  const int face_y1 = static_cast<int>(std::ceil(0.9 * h));

  // Static landmark layout matching LandmarkSchema::default_schema().
  std::array<Vec2, kNumLandmarks> pts;
  const Vec2 eye_l{0.35 * w, 0.4 * h};
  const Vec2 eye_r{0.65 * w, 0.4 * h};
  const double eye_radius = 0.03 * w;
  for (int i = 0; i < 8; ++i) {
    const double ang = kTwoPi * i / 8.0;
    pts[static_cast<std::size_t>(i)] = {eye_l.x + eye_radius * std::cos(ang),
                                        eye_l.y + eye_radius * std::sin(ang)};
    pts[static_cast<std::size_t>(8 + i)] = {eye_r.x + eye_radius * std::cos(ang),
                                            eye_r.y + eye_radius * std::sin(ang)};
  }
  pts[16] = {0.1 * w, 0.55 * h};   // left cheek border
  pts[17] = {0.9 * w, 0.55 * h};   // right cheek border
  pts[18] = {0.5 * w, 0.9 * h};    // chin
  pts[19] = {0.35 * w, 0.3 * h};   // left eyebrow center
  pts[20] = {0.65 * w, 0.3 * h};   // right eyebrow center
  for (int i = 21; i < kNumLandmarks; ++i) {
    // Filler points on an ellipse inside the face; they carry no semantics.
    const double ang = kTwoPi * (i - 21) / (kNumLandmarks - 21);
    pts[static_cast<std::size_t>(i)] = {0.5 * w + 0.3 * w * std::cos(ang),
                                        0.55 * h + 0.3 * h * std::sin(ang)};
  }

  // Static per-pixel dither decorrelates 8-bit rounding from the pulse so
  // block averages stay faithful at small modulation depths.
  Rng dither_rng = Rng(spec.seed).fork(3);
  std::vector<float> dither(static_cast<std::size_t>(height) * width * 3);
  for (float& d : dither) d = static_cast<float>(dither_rng.uniform(-3.0, 3.0));

  Rng sensor_rng = Rng(spec.seed).fork(4);

  SynthVideo video;
  video.sequence.nominal_fps = spec.fps;
  video.sequence.subject_id = "synth_subject";
  video.sequence.video_id = "synth_video";
  video.sequence.frames.reserve(static_cast<std::size_t>(T));
  video.landmarks.points.assign(static_cast<std::size_t>(T), pts);
  video.landmarks.valid.assign(static_cast<std::size_t>(T), 1);

  for (int t = 0; t < T; ++t) {
    const double ts = static_cast<double>(t) / spec.fps;
    const double phi = spec.phase_at(ts);
    const double pulse = std::sin(phi) + spec.harmonic_ratio * std::sin(2.0 * phi);
    const double drift = spec.drift_amp * std::sin(kTwoPi * spec.drift_freq_hz * ts);
    const double sensor = spec.sensor_sigma * sensor_rng.gauss();
    const double modulation = drift + sensor;

    Frame f;
    f.height = height;
    f.width = width;
    f.channels = 3;
    f.data.assign(static_cast<std::size_t>(height) * width * 3, 0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const bool in_face = x >= face_x0 && x < face_x1 && y >= face_y0 && y < face_y1;
        for (int c = 0; c < 3; ++c) {
          double v;
          if (in_face) {
            v = kBaseColor[c] * (1.0 + kChannelDepth[c] * spec.amplitude * pulse + modulation) +
                dither[(static_cast<std::size_t>(y) * width + x) * 3 + static_cast<std::size_t>(c)];
          } else {
            v = 40.0;
          }
          f.data[(static_cast<std::size_t>(y) * width + x) * 3 + static_cast<std::size_t>(c)] =
              static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    }
    video.sequence.frames.push_back(std::move(f));
    video.sequence.timestamps_ms.push_back(
        static_cast<std::int64_t>(std::llround(ts * 1000.0)));
  }

  // 1 Hz ground truth; label_windows averages these inside each clip span.
  for (std::int64_t ms = 0; ms <= video.sequence.timestamps_ms.back(); ms += 1000) {
    const double ts = static_cast<double>(ms) / 1000.0;
    video.ground_truth.hr_samples.emplace_back(ms, spec.hr_at(ts));
    video.ground_truth.bvp_samples.emplace_back(
        ms, std::sin(spec.phase_at(ts)) +
                spec.harmonic_ratio * std::sin(2.0 * spec.phase_at(ts)));
  }
  return video;
}

}  // namespace rhythmkit
