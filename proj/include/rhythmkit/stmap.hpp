// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rhythmkit/face_geometry.hpp"
#include "rhythmkit/types.hpp"

namespace rhythmkit {

// Target color space for map construction.
enum class ColorSpace { kRgb, kYuv };

ColorSpace parse_colorspace(const std::string& name);
std::string colorspace_name(ColorSpace cs);

// One estimation clip: a frame-index span inside a sequence, plus the
// ground-truth label when known.
struct ClipWindow {
  int start_frame = 0;
  int length = 0;
  int step_frames = 0;
  std::optional<double> gt_hr_bpm;
};

// Raw (un-normalized) per-block per-channel color means over a clip, in the
// source color space. Values are stored in (t, block, channel) order. This is
// the shared precursor of the normalized map and of the classical estimators,
// which need physical channel means rather than normalized rows.
struct BlockTraces {
  int t_frames = 0;
  int n_blocks = 0;
  int channels = 0;
  double fps = 0.0;

  std::vector<double> data;

  double at(int t, int b, int c) const {
    return data[(static_cast<std::size_t>(t) * n_blocks + b) * channels + c];
  }
  double& at(int t, int b, int c) {
    return data[(static_cast<std::size_t>(t) * n_blocks + b) * channels + c];
  }
};

// Normalized T×n×c map: per-row (block, channel) min-max scaled to [0, 255].
struct SpatialTemporalMap {
  int t_frames = 0;
  int n_blocks = 0;
  int channels = 0;
  double fps = 0.0;
  ColorSpace colorspace = ColorSpace::kYuv;
  ClipWindow clip;
  std::string subject_id;
  std::string video_id;

  std::vector<float> data;  // (t, block, channel) order

  float at(int t, int b, int c) const {
    return data[(static_cast<std::size_t>(t) * n_blocks + b) * channels + c];
  }
  float& at(int t, int b, int c) {
    return data[(static_cast<std::size_t>(t) * n_blocks + b) * channels + c];
  }
};

// Per-channel mean over the masked pixels of `region`; falls back to the
// mean over sampling-valid pixels when the masked count is below 5% of the
// region area (and to 0 when the region has no valid pixels at all).
// Throws ValidationError on a zero-area region.
std::vector<double> block_mean(const AlignedFace& face, const Rect& region, const Mask& mask);

// Fixed RGB→YUV transform (offsets 128 on the chroma rows, no clamping):
//   Y = 0.299 R + 0.587 G + 0.114 B
//   U = −0.169 R − 0.331 G + 0.5 B + 128
//   V = 0.5 R − 0.419 G − 0.081 B + 128
std::array<double, 3> rgb_to_yuv(const std::array<double, 3>& rgb);

// Sliding clip windows: step_frames = round(step_seconds·fps), starts at
// 0, step, 2·step, … while the window fits. Throws ValidationError when
// win_frames exceeds seq_len or the step rounds to zero.
std::vector<ClipWindow> slide_windows(int seq_len, double fps, int win_frames,
                                      double step_seconds);

// Min-max scaling to [0, 255]; constant rows map to all-zeros (the same
// representation the masking augmentation uses for "no signal").
std::vector<double> minmax_normalize_row(const std::vector<double>& row);

// Per-frame block pooling over one clip: align each valid-landmark frame,
// apply the skin mask, average each grid block per channel in the source
// color space. Frames with invalid landmarks are filled by linear
// interpolation between the neighboring valid frames (edges hold the nearest
// valid frame). Throws ValidationError when every frame is invalid.
BlockTraces extract_block_traces(const FrameSequence& seq, const LandmarkTrack& landmarks,
                                 const ClipWindow& clip, int rows, int cols,
                                 const LandmarkSchema& schema);

// Full map construction: pooling as above, optional RGB→YUV transform
// (3-channel input only; single-channel clips produce c=1 maps), then
// per-row min-max normalization.
SpatialTemporalMap build_stmap(const FrameSequence& seq, const LandmarkTrack& landmarks,
                               const ClipWindow& clip, int rows, int cols,
                               ColorSpace colorspace, const LandmarkSchema& schema);

// Normalize a raw trace tensor into a map (the tail of build_stmap); exposed
// so synthetic generators can share the exact transform+normalization path.
SpatialTemporalMap normalize_traces(const BlockTraces& traces, ColorSpace colorspace);

// Time-dimension masking augmentation: with probability `prob` zero all rows
// over a span of uniform length in [min_len, max_len] at a uniform start.
// Deterministic under the seed. Throws ValidationError when max_len ≥ T.
SpatialTemporalMap mask_augment(const SpatialTemporalMap& map, std::uint64_t rng_seed,
                                int min_len = 10, int max_len = 30, double prob = 0.5);

// Clip labels from a ground-truth trace: mean of the HR samples whose time
// falls inside the window's span; when none do, the sample nearest to the
// window midpoint is used.
void label_windows(std::vector<ClipWindow>& windows, const std::vector<std::int64_t>& timestamps,
                   const GroundTruthTrace& trace);

// Map container file (.stm): magic "RKM1", u32 little-endian T, n, c,
// f32 fps, then T·n·c little-endian f32 values in (t, block, channel) order.
// A .stm.meta text sidecar carries subject/video ids and the clip window.
void write_stmap(const SpatialTemporalMap& map, const std::string& path);
SpatialTemporalMap load_stmap(const std::string& path);

}  // namespace rhythmkit
