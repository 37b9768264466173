// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "rhythmkit/face_geometry.hpp"
#include "rhythmkit/rng.hpp"
#include "test_util.hpp"

using namespace rhythmkit;
using testutil::TmpDir;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Landmarks with cheeks at x=100 and x=200, eyebrow-center y=80, chin y=180,
// eye centers level at y=100.
std::array<Vec2, kNumLandmarks> reference_landmarks() {
  std::array<Vec2, kNumLandmarks> pts{};
  for (int i = 0; i < 8; ++i) {
    pts[static_cast<std::size_t>(i)] = {130.0, 100.0};
    pts[static_cast<std::size_t>(8 + i)] = {170.0, 100.0};
  }
  pts[16] = {100.0, 130.0};
  pts[17] = {200.0, 130.0};
  pts[18] = {150.0, 180.0};
  pts[19] = {130.0, 80.0};
  pts[20] = {170.0, 80.0};
  for (int i = 21; i < kNumLandmarks; ++i) pts[static_cast<std::size_t>(i)] = {150.0, 120.0};
  return pts;
}

std::array<Vec2, kNumLandmarks> rotate_about(const std::array<Vec2, kNumLandmarks>& pts,
                                             double cx, double cy, double deg) {
  const double rad = deg * kPi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  std::array<Vec2, kNumLandmarks> out{};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dx = pts[i].x - cx, dy = pts[i].y - cy;
    out[i] = {cx + c * dx - s * dy, cy + s * dx + c * dy};
  }
  return out;
}

Frame constant_frame(int h, int w, int channels, std::uint8_t r, std::uint8_t g,
                     std::uint8_t b) {
  Frame f;
  f.height = h;
  f.width = w;
  f.channels = channels;
  f.data.resize(static_cast<std::size_t>(h) * w * channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        f.at(y, x, c) = (channels == 1) ? r : (c == 0 ? r : (c == 1 ? g : b));
  return f;
}

AlignedFace uniform_face(int h, int w, int channels, float r, float g, float b) {
  AlignedFace face;
  face.height = h;
  face.width = w;
  face.channels = channels;
  face.data.resize(static_cast<std::size_t>(h) * w * channels);
  face.valid.assign(static_cast<std::size_t>(h) * w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        face.data[(static_cast<std::size_t>(y) * w + x) * channels + c] =
            (channels == 1) ? r : (c == 0 ? r : (c == 1 ? g : b));
  return face;
}

}  // namespace

TEST_CASE("face box geometry follows the landmark rules") {
  const auto pts = reference_landmarks();
  const FaceBox box = face_box(pts, LandmarkSchema::default_schema());
  CHECK(box.width == doctest::Approx(100.0));    // outer-cheek distance
  CHECK(box.height == doctest::Approx(120.0));   // 1.2 * (180 - 80)
  CHECK(box.rotation_deg == doctest::Approx(0.0).epsilon(1e-9));

  SUBCASE("translation leaves width and height unchanged") {
    auto moved = pts;
    for (auto& p : moved) {
      p.x += 37.5;
      p.y -= 12.25;
    }
    const FaceBox box2 = face_box(moved, LandmarkSchema::default_schema());
    CHECK(box2.width == doctest::Approx(box.width));
    CHECK(box2.height == doctest::Approx(box.height));
  }

  SUBCASE("in-plane rotation is recovered and width is rotation-invariant") {
    const auto rotated = rotate_about(pts, 150.0, 100.0, 10.0);
    const FaceBox box2 = face_box(rotated, LandmarkSchema::default_schema());
    CHECK(box2.rotation_deg == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(box2.width == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(box2.height == doctest::Approx(120.0).epsilon(1e-6));
  }

  SUBCASE("coincident eye centers are rejected") {
    auto bad = pts;
    for (int i = 8; i < 16; ++i) bad[static_cast<std::size_t>(i)] = bad[0];
    CHECK_THROWS_AS(face_box(bad, LandmarkSchema::default_schema()), ValidationError);
  }
}

TEST_CASE("alignment with zero rotation is a plain crop") {
  Frame frame = constant_frame(240, 320, 3, 0, 0, 0);
  for (int y = 0; y < 240; ++y)
    for (int x = 0; x < 320; ++x)
      frame.at(y, x, 1) = static_cast<std::uint8_t>((x + y) % 251);

  // Odd extents put the crop grid exactly on source pixels (no bilinear
  // blending), so the crop must equal the source region.
  FaceBox box;
  box.center_x = 160.0;
  box.center_y = 120.0;
  box.width = 101.0;
  box.height = 81.0;
  box.rotation_deg = 0.0;

  const AlignedFace face = align_face(frame, box);
  REQUIRE(face.width == 101);
  REQUIRE(face.height == 81);
  const int sx = 160 - 50;
  const int sy = 120 - 40;
  bool all_match = true;
  for (int y = 0; y < face.height; ++y)
    for (int x = 0; x < face.width; ++x) {
      if (!face.valid_at(y, x)) continue;
      const double expect = frame.at(sy + y, sx + x, 1);
      if (std::abs(face.at(y, x, 1) - expect) > 1e-3) all_match = false;
    }
  CHECK(all_match);
}

TEST_CASE("alignment of a uniform frame is uniform under any rotation") {
  const Frame frame = constant_frame(100, 100, 3, 180, 120, 100);
  FaceBox box;
  box.center_x = 50.0;
  box.center_y = 50.0;
  box.width = 40.0;
  box.height = 30.0;
  box.rotation_deg = 23.0;
  const AlignedFace face = align_face(frame, box);
  bool uniform = true;
  for (int y = 0; y < face.height; ++y)
    for (int x = 0; x < face.width; ++x) {
      if (!face.valid_at(y, x)) continue;
      if (std::abs(face.at(y, x, 0) - 180.0f) > 1e-3f) uniform = false;
      if (std::abs(face.at(y, x, 2) - 100.0f) > 1e-3f) uniform = false;
    }
  CHECK(uniform);
}

TEST_CASE("alignment rejects a box entirely outside the frame") {
  const Frame frame = constant_frame(50, 50, 3, 10, 10, 10);
  FaceBox box;
  box.center_x = 500.0;
  box.center_y = 500.0;
  box.width = 20.0;
  box.height = 20.0;
  CHECK_THROWS_AS(align_face(frame, box), ValidationError);
}

TEST_CASE("skin mask threshold rule") {
  SUBCASE("skin tone patch passes") {
    const AlignedFace face = uniform_face(20, 20, 3, 200.0f, 140.0f, 120.0f);
    const Mask mask = skin_mask(face);
    CHECK(mask.fraction() > 0.99);
  }
  SUBCASE("pure green fails") {
    const AlignedFace face = uniform_face(20, 20, 3, 0.0f, 255.0f, 0.0f);
    const Mask mask = skin_mask(face);
    CHECK(mask.fraction() < 0.01);
  }
  SUBCASE("single-channel faces pass through all-true") {
    const AlignedFace face = uniform_face(8, 8, 1, 99.0f, 0.0f, 0.0f);
    const Mask mask = skin_mask(face);
    CHECK(mask.fraction() == doctest::Approx(1.0));
  }
  SUBCASE("deterministic") {
    const AlignedFace face = uniform_face(16, 16, 3, 190.0f, 130.0f, 110.0f);
    const Mask a = skin_mask(face);
    const Mask b = skin_mask(face);
    CHECK(a.data == b.data);
  }
}

TEST_CASE("grid blocks tile the face exactly") {
  SUBCASE("100x100 into 5x5 gives 25 blocks of 20x20") {
    const AlignedFace face = uniform_face(100, 100, 3, 1, 1, 1);
    const RoiGrid grid = grid_blocks(face, 5, 5);
    REQUIRE(grid.regions.size() == 25);
    for (const Rect& r : grid.regions) {
      CHECK(r.width() == 20);
      CHECK(r.height() == 20);
    }
  }
  SUBCASE("101x101 into 5x5 puts the remainder in the last row/column") {
    const AlignedFace face = uniform_face(101, 101, 3, 1, 1, 1);
    const RoiGrid grid = grid_blocks(face, 5, 5);
    REQUIRE(grid.regions.size() == 25);
    CHECK(grid.regions[0].width() == 20);
    CHECK(grid.regions[4].width() == 21);   // last column
    CHECK(grid.regions[20].height() == 21); // last row
  }
  SUBCASE("face smaller than the grid is rejected") {
    const AlignedFace face = uniform_face(3, 3, 3, 1, 1, 1);
    CHECK_THROWS_AS(grid_blocks(face, 5, 5), ValidationError);
  }
  SUBCASE("pixel-count conservation over random sizes") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
      const int rows = rng.uniform_int(1, 6), cols = rng.uniform_int(1, 6);
      const int h = rng.uniform_int(rows, 50), w = rng.uniform_int(cols, 50);
      const AlignedFace face = uniform_face(h, w, 1, 0, 0, 0);
      const RoiGrid grid = grid_blocks(face, rows, cols);
      long long total = 0;
      for (const Rect& r : grid.regions) {
        CHECK(r.x0 >= 0);
        CHECK(r.y0 >= 0);
        CHECK(r.x1 <= w);
        CHECK(r.y1 <= h);
        total += r.area();
      }
      CHECK(total == static_cast<long long>(h) * w);
    }
  }
}

TEST_CASE("landmark schema files override the defaults") {
  TmpDir dir;
  testutil::write_text(dir.file("schema.txt"),
                       "# custom layout\nchin = 40\ncheek_left = 41\ncheek_right = 42\n");
  const LandmarkSchema schema = load_landmark_schema(dir.file("schema.txt"));
  CHECK(schema.chin == std::vector<int>{40});
  CHECK(schema.cheek_left == std::vector<int>{41});
  CHECK(schema.left_eye == LandmarkSchema::default_schema().left_eye);

  testutil::write_text(dir.file("bad.txt"), "nose = 1\n");
  CHECK_THROWS_AS(load_landmark_schema(dir.file("bad.txt")), ValidationError);
  CHECK_THROWS_AS(load_landmark_schema(dir.file("missing.txt")), IoError);
}
