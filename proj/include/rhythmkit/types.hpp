// SPDX-License-Identifier: Apache-2.0
//
// Core domain types shared across the RhythmKit pipeline.

#ifndef RHYTHMKIT_TYPES_HPP_
#define RHYTHMKIT_TYPES_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rhythmkit {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Input data violates a documented invariant (bad dimensions, bad ranges...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / file-format failure.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A spectral estimator found no usable in-band peak.
class NoPeakError : public std::runtime_error {
 public:
  explicit NoPeakError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Frames and landmarks
// ---------------------------------------------------------------------------

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline constexpr int kNumLandmarks = 81;

/// One video frame, 8-bit per channel, row-major, channel-interleaved.
struct Frame {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 (NIR-style) or 3 (RGB)
  std::vector<std::uint8_t> data;

  std::uint8_t at(int y, int x, int c) const {
    return data[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t& at(int y, int x, int c) {
    return data[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

/// Ordered frames with per-frame timestamps and a nominal frame rate.
struct FrameSequence {
  std::vector<Frame> frames;
  std::vector<std::int64_t> timestamps_ms;  // strictly increasing, >= 0
  double nominal_fps = 0.0;
  std::string subject_id;
  std::string video_id;

  int size() const { return static_cast<int>(frames.size()); }
  double duration_s() const {
    if (timestamps_ms.size() < 2) return 0.0;
    return static_cast<double>(timestamps_ms.back() - timestamps_ms.front()) / 1000.0;
  }
};

/// Per-frame 81-point facial landmarks with a per-frame validity flag.
struct LandmarkTrack {
  std::vector<std::array<Vec2, kNumLandmarks>> points;  // one entry per frame
  std::vector<std::uint8_t> valid;                      // detection success per frame

  int size() const { return static_cast<int>(points.size()); }
};

/// Time-stamped ground-truth heart rate (and optional BVP) samples.
struct GroundTruthTrace {
  std::vector<std::pair<std::int64_t, double>> hr_samples;   // (time_ms, hr_bpm)
  std::vector<std::pair<std::int64_t, double>> bvp_samples;  // optional

  bool empty() const { return hr_samples.empty(); }
};

inline constexpr double kHrMinBpm = 30.0;
inline constexpr double kHrMaxBpm = 240.0;

}  // namespace rhythmkit

#endif  // RHYTHMKIT_TYPES_HPP_
