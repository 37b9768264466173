// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rhythmkit/types.hpp"

namespace rhythmkit {

// Semantic landmark indices. The 81-point ordering varies between detectors,
// so the mapping lives in configuration rather than code.
struct LandmarkSchema {
  std::vector<int> left_eye;
  std::vector<int> right_eye;
  std::vector<int> cheek_left;
  std::vector<int> cheek_right;
  std::vector<int> chin;
  std::vector<int> eyebrow_left;
  std::vector<int> eyebrow_right;

  // Built-in layout used by the synthetic generator and the test fixtures.
  static LandmarkSchema default_schema();
};

// Parse a key/value schema file: one `name = i0,i1,...` entry per line,
// `#` comments allowed. Unknown keys are rejected; missing keys keep the
// defaults.
LandmarkSchema load_landmark_schema(const std::string& path);

// Oriented face region: center in source-pixel coordinates, extent in pixels,
// in-plane rotation of the eye line in degrees (image coordinates, y down).
struct FaceBox {
  double center_x = 0.0;
  double center_y = 0.0;
  double width = 0.0;
  double height = 0.0;
  double rotation_deg = 0.0;
};

// Axis-aligned face crop at original resolution. Pixels are stored
// channel-interleaved row-major as floats (bilinear samples of 8-bit data);
// `valid` marks pixels whose sample position fell inside the source frame.
struct AlignedFace {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;
  std::vector<std::uint8_t> valid;

  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool valid_at(int y, int x) const {
    return valid[static_cast<std::size_t>(y) * width + x] != 0;
  }
};

// Boolean pixel mask over an aligned face.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  bool at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  double fraction() const;
};

// Half-open pixel rectangle [x0, x1) × [y0, y1) in aligned-face coordinates.
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return static_cast<long long>(width()) * height(); }
};

// Tiling of an aligned face into rows×cols rectangular blocks.
struct RoiGrid {
  int rows = 0;
  int cols = 0;
  std::vector<Rect> regions;  // row-major, rows*cols entries
};

// Box geometry from one frame's landmarks: rotation from the eye-center
// line, width from the outer cheek points, height 1.2× the chin-to-eyebrow
// distance, all measured after rotation normalization. Throws
// ValidationError on coincident eye centers.
FaceBox face_box(const std::array<Vec2, kNumLandmarks>& landmarks,
                 const LandmarkSchema& schema);

// Rigid (rotation + translation, no scaling) resampling of the box into an
// axis-aligned crop; bilinear interpolation, out-of-frame samples flagged
// invalid. Throws ValidationError when the box lies entirely outside the
// frame.
AlignedFace align_face(const Frame& frame, const FaceBox& box);

// Fixed YCrCb threshold rule: skin iff Cr ∈ [133, 173], Cb ∈ [77, 127] and
// Y > 40. Single-channel faces return an all-true mask. Invalid pixels are
// never skin.
Mask skin_mask(const AlignedFace& face);

// Equal-size tiling with remainder pixels assigned to the last row/column.
// Throws ValidationError when the face is smaller than the grid.
RoiGrid grid_blocks(const AlignedFace& face, int rows, int cols);

}  // namespace rhythmkit
