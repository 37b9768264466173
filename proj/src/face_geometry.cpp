// SPDX-License-Identifier: Apache-2.0

#include "rhythmkit/face_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace rhythmkit {

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

Vec2 mean_point(const std::array<Vec2, kNumLandmarks>& pts, const std::vector<int>& idx) {
  if (idx.empty()) throw ValidationError("landmark schema entry is empty");
  double sx = 0.0, sy = 0.0;
  for (int i : idx) {
    if (i < 0 || i >= kNumLandmarks)
      throw ValidationError("landmark schema index out of range: " + std::to_string(i));
    sx += pts[static_cast<std::size_t>(i)].x;
    sy += pts[static_cast<std::size_t>(i)].y;
  }
  return {sx / static_cast<double>(idx.size()), sy / static_cast<double>(idx.size())};
}

// Rotate p by `rad` about `origin` (image coordinates).
Vec2 rotate_about(const Vec2& p, const Vec2& origin, double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  const double dx = p.x - origin.x, dy = p.y - origin.y;
  return {origin.x + c * dx - s * dy, origin.y + s * dx + c * dy};
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

LandmarkSchema LandmarkSchema::default_schema() {
  LandmarkSchema s;
  s.left_eye = {0, 1, 2, 3, 4, 5, 6, 7};
  s.right_eye = {8, 9, 10, 11, 12, 13, 14, 15};
  s.cheek_left = {16};
  s.cheek_right = {17};
  s.chin = {18};
  s.eyebrow_left = {19};
  s.eyebrow_right = {20};
  return s;
}

LandmarkSchema load_landmark_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file: " + path);
  LandmarkSchema schema = LandmarkSchema::default_schema();
  std::string line;
  while (std::getline(in, line)) {
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ValidationError("schema line missing '=': " + stripped);
    const std::string key = trim(stripped.substr(0, eq));
    std::vector<int> indices;
    std::stringstream values(stripped.substr(eq + 1));
    std::string tok;
    while (std::getline(values, tok, ',')) {
      const std::string t = trim(tok);
      if (t.empty()) continue;
      try {
        std::size_t pos = 0;
        indices.push_back(std::stoi(t, &pos));
        if (pos != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        throw ValidationError("non-numeric schema index: '" + t + "'");
      }
    }
    if (indices.empty()) throw ValidationError("schema entry '" + key + "' is empty");
    if (key == "left_eye") schema.left_eye = indices;
    else if (key == "right_eye") schema.right_eye = indices;
    else if (key == "cheek_left") schema.cheek_left = indices;
    else if (key == "cheek_right") schema.cheek_right = indices;
    else if (key == "chin") schema.chin = indices;
    else if (key == "eyebrow_left") schema.eyebrow_left = indices;
    else if (key == "eyebrow_right") schema.eyebrow_right = indices;
    else throw ValidationError("unknown schema key: '" + key + "'");
  }
  return schema;
}

double Mask::fraction() const {
  if (data.empty()) return 0.0;
  long long on = 0;
  for (std::uint8_t v : data) on += (v != 0);
  return static_cast<double>(on) / static_cast<double>(data.size());
}

FaceBox face_box(const std::array<Vec2, kNumLandmarks>& landmarks,
                 const LandmarkSchema& schema) {
  const Vec2 eye_l = mean_point(landmarks, schema.left_eye);
  const Vec2 eye_r = mean_point(landmarks, schema.right_eye);
  const double ex = eye_r.x - eye_l.x;
  const double ey = eye_r.y - eye_l.y;
  if (std::hypot(ex, ey) < 1e-12) throw ValidationError("coincident eye centers");
  const double theta = std::atan2(ey, ex);

  const Vec2 eye_mid{(eye_l.x + eye_r.x) / 2.0, (eye_l.y + eye_r.y) / 2.0};
  // Undo the in-plane rotation so all extents are measured on the level face.
  const Vec2 cheek_l = rotate_about(mean_point(landmarks, schema.cheek_left), eye_mid, -theta);
  const Vec2 cheek_r = rotate_about(mean_point(landmarks, schema.cheek_right), eye_mid, -theta);
  const Vec2 chin = rotate_about(mean_point(landmarks, schema.chin), eye_mid, -theta);
  const Vec2 brow_l = rotate_about(mean_point(landmarks, schema.eyebrow_left), eye_mid, -theta);
  const Vec2 brow_r = rotate_about(mean_point(landmarks, schema.eyebrow_right), eye_mid, -theta);
  const Vec2 brow_mid{(brow_l.x + brow_r.x) / 2.0, (brow_l.y + brow_r.y) / 2.0};

  const double width = std::abs(cheek_r.x - cheek_l.x);
  const double h = std::abs(chin.y - brow_mid.y);
  if (width < 1e-12 || h < 1e-12) throw ValidationError("degenerate landmarks");
  const double height = 1.2 * h;

  // Box spans the cheeks horizontally and runs from 0.2·h above the eyebrow
  // center down to the chin, then rotates back into source coordinates.
  const double level_cx = (cheek_l.x + cheek_r.x) / 2.0;
  const double top_y = std::min(brow_mid.y, chin.y) - 0.2 * h;
  const Vec2 level_center{level_cx, top_y + height / 2.0};
  const Vec2 center = rotate_about(level_center, eye_mid, theta);

  FaceBox box;
  box.center_x = center.x;
  box.center_y = center.y;
  box.width = width;
  box.height = height;
  box.rotation_deg = theta * kDegPerRad;
  return box;
}

AlignedFace align_face(const Frame& frame, const FaceBox& box) {
  if (box.width <= 0.0 || box.height <= 0.0) throw ValidationError("non-positive box extent");
  AlignedFace face;
  face.width = std::max(1, static_cast<int>(std::lround(box.width)));
  face.height = std::max(1, static_cast<int>(std::lround(box.height)));
  face.channels = frame.channels;
  face.data.assign(static_cast<std::size_t>(face.width) * face.height * face.channels, 0.0f);
  face.valid.assign(static_cast<std::size_t>(face.width) * face.height, 0);

  const double theta = box.rotation_deg / kDegPerRad;
  const double c = std::cos(theta), s = std::sin(theta);
  long long n_valid = 0;
  for (int y = 0; y < face.height; ++y) {
    for (int x = 0; x < face.width; ++x) {
      // Crop-space offset from the box center, rotated into source space.
      const double ox = static_cast<double>(x) - (face.width - 1) / 2.0;
      const double oy = static_cast<double>(y) - (face.height - 1) / 2.0;
      const double sx = box.center_x + c * ox - s * oy;
      const double sy = box.center_y + s * ox + c * oy;
      if (sx < 0.0 || sy < 0.0 || sx > frame.width - 1.0 || sy > frame.height - 1.0) continue;

      const int x0 = std::min(static_cast<int>(sx), frame.width - 2 >= 0 ? frame.width - 2 : 0);
      const int y0 = std::min(static_cast<int>(sy), frame.height - 2 >= 0 ? frame.height - 2 : 0);
      const int x1 = std::min(x0 + 1, frame.width - 1);
      const int y1 = std::min(y0 + 1, frame.height - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < frame.channels; ++ch) {
        const double v00 = frame.at(y0, x0, ch);
        const double v01 = frame.at(y0, x1, ch);
        const double v10 = frame.at(y1, x0, ch);
        const double v11 = frame.at(y1, x1, ch);
        const double v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                         fy * ((1.0 - fx) * v10 + fx * v11);
        face.data[(static_cast<std::size_t>(y) * face.width + x) * face.channels + ch] =
            static_cast<float>(v);
      }
      face.valid[static_cast<std::size_t>(y) * face.width + x] = 1;
      ++n_valid;
    }
  }
  if (n_valid == 0) throw ValidationError("face box entirely outside frame");
  return face;
}

Mask skin_mask(const AlignedFace& face) {
  Mask mask;
  mask.height = face.height;
  mask.width = face.width;
  mask.data.assign(static_cast<std::size_t>(face.height) * face.width, 0);
  if (face.channels == 1) {
    std::fill(mask.data.begin(), mask.data.end(), std::uint8_t{1});
    return mask;
  }
  if (face.channels != 3) throw ValidationError("skin mask needs 1 or 3 channels");
  for (int y = 0; y < face.height; ++y) {
    for (int x = 0; x < face.width; ++x) {
      if (!face.valid_at(y, x)) continue;
      const double r = face.at(y, x, 0);
      const double g = face.at(y, x, 1);
      const double b = face.at(y, x, 2);
      const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
      const double cb = -0.169 * r - 0.331 * g + 0.5 * b + 128.0;
      const double cr = 0.5 * r - 0.419 * g - 0.081 * b + 128.0;
      const bool skin = luma > 40.0 && cr >= 133.0 && cr <= 173.0 && cb >= 77.0 && cb <= 127.0;
      mask.data[static_cast<std::size_t>(y) * face.width + x] = skin ? 1 : 0;
    }
  }
  return mask;
}

RoiGrid grid_blocks(const AlignedFace& face, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ValidationError("grid must be at least 1x1");
  if (face.height < rows || face.width < cols)
    throw ValidationError("face smaller than grid");
  RoiGrid grid;
  grid.rows = rows;
  grid.cols = cols;
  grid.regions.reserve(static_cast<std::size_t>(rows) * cols);
  const int base_h = face.height / rows;
  const int base_w = face.width / cols;
  for (int r = 0; r < rows; ++r) {
    const int y0 = r * base_h;
    const int y1 = (r == rows - 1) ? face.height : y0 + base_h;
    for (int col = 0; col < cols; ++col) {
      const int x0 = col * base_w;
      const int x1 = (col == cols - 1) ? face.width : x0 + base_w;
      grid.regions.push_back(Rect{x0, y0, x1, y1});
    }
  }
  return grid;
}

}  // namespace rhythmkit
