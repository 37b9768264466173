// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include "doctest.h"
#include "rhythmkit/face_geometry.hpp"
#include "rhythmkit/rng.hpp"
#include "rhythmkit/stmap.hpp"
#include "test_util.hpp"

using namespace rhythmkit;
using testutil::TmpDir;

namespace {

constexpr double kTwoPi = 6.283185307179586476925;

// 3-channel sequence with constant red/blue and sinusoidal green.
FrameSequence green_modulated_sequence(int n, double fps, double hz, double amp) {
  FrameSequence seq = testutil::constant_sequence(n, 40, 40, 3, 0, fps);
  for (int t = 0; t < n; ++t) {
    Frame& f = seq.frames[static_cast<std::size_t>(t)];
    const double g = 120.0 + amp * std::sin(kTwoPi * hz * t / fps);
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        f.at(y, x, 0) = 180;
        f.at(y, x, 1) = static_cast<std::uint8_t>(std::lround(g));
        f.at(y, x, 2) = 100;
      }
  }
  return seq;
}

}  // namespace

TEST_CASE("color transform matches the fixed matrix on anchor vectors") {
  const auto black = rgb_to_yuv({0.0, 0.0, 0.0});
  CHECK(testutil::near(black[0], 0.0, 1e-9));
  CHECK(testutil::near(black[1], 128.0, 1e-9));
  CHECK(testutil::near(black[2], 128.0, 1e-9));

  const auto white = rgb_to_yuv({255.0, 255.0, 255.0});
  CHECK(testutil::near(white[0], 255.0, 1e-9));
  CHECK(testutil::near(white[1], 128.0, 1e-9));
  CHECK(testutil::near(white[2], 128.0, 1e-9));

  const auto red = rgb_to_yuv({255.0, 0.0, 0.0});
  CHECK(testutil::near(red[0], 76.245, 1e-9));
  CHECK(testutil::near(red[1], 84.905, 1e-9));
  CHECK(testutil::near(red[2], 255.5, 1e-9));
}

TEST_CASE("per-row min-max normalization") {
  SUBCASE("three-point example") {
    const std::vector<double> out = minmax_normalize_row({1.0, 2.0, 3.0});
    REQUIRE(out.size() == 3);
    CHECK(out[0] == doctest::Approx(0.0));
    CHECK(out[1] == doctest::Approx(127.5));
    CHECK(out[2] == doctest::Approx(255.0));
  }
  SUBCASE("constant rows map to zeros") {
    const std::vector<double> out = minmax_normalize_row({5.0, 5.0, 5.0});
    CHECK(out == std::vector<double>{0.0, 0.0, 0.0});
  }
  SUBCASE("already-normalized extremes unchanged") {
    const std::vector<double> out = minmax_normalize_row({0.0, 255.0});
    CHECK(out == std::vector<double>{0.0, 255.0});
  }
  SUBCASE("idempotent on non-constant rows") {
    const std::vector<double> once = minmax_normalize_row({3.0, -1.0, 7.5, 2.25});
    const std::vector<double> twice = minmax_normalize_row(once);
    for (std::size_t i = 0; i < once.size(); ++i)
      CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-12));
  }
}

TEST_CASE("sliding windows") {
  SUBCASE("900 frames, 30 fps, 300-frame window, 0.5 s step gives 41 windows") {
    const std::vector<ClipWindow> windows = slide_windows(900, 30.0, 300, 0.5);
    CHECK(windows.size() == 41);
    CHECK(windows.front().start_frame == 0);
    CHECK(windows.front().step_frames == 15);
    CHECK(windows.back().start_frame == 600);
    for (const ClipWindow& w : windows) {
      CHECK(w.length == 300);
      CHECK(w.start_frame + w.length <= 900);
    }
  }
  SUBCASE("window equal to the sequence gives exactly one") {
    const std::vector<ClipWindow> windows = slide_windows(300, 30.0, 300, 0.5);
    CHECK(windows.size() == 1);
  }
  SUBCASE("window longer than the sequence is rejected") {
    CHECK_THROWS_AS(slide_windows(299, 30.0, 300, 0.5), ValidationError);
  }
  SUBCASE("count formula matches enumeration on random instances") {
    Rng rng(77);
    for (int trial = 0; trial < 400; ++trial) {
      const int L = rng.uniform_int(1, 2000);
      const int W = rng.uniform_int(1, L);
      const int step = rng.uniform_int(1, L);
      // Pick fps/step_seconds that round to exactly `step` frames.
      const double fps = 10.0;
      const double step_seconds = step / fps;
      const std::vector<ClipWindow> windows = slide_windows(L, fps, W, step_seconds);
      int expected = 0;
      for (int start = 0; start + W <= L; start += step) ++expected;
      CHECK(static_cast<int>(windows.size()) == expected);
      CHECK(static_cast<int>(windows.size()) == (L - W) / step + 1);
    }
  }
}

TEST_CASE("map construction from a synthetic clip") {
  const LandmarkSchema schema = LandmarkSchema::default_schema();

  SUBCASE("constant clip gives an all-zero map of exact shape") {
    const FrameSequence seq = testutil::constant_sequence(32, 40, 40, 3, 150);
    const LandmarkTrack lms = testutil::centered_landmarks(32, 40, 40);
    ClipWindow clip;
    clip.start_frame = 0;
    clip.length = 32;
    clip.step_frames = 32;
    const SpatialTemporalMap map = build_stmap(seq, lms, clip, 5, 5, ColorSpace::kYuv, schema);
    CHECK(map.t_frames == 32);
    CHECK(map.n_blocks == 25);
    CHECK(map.channels == 3);
    CHECK(map.data.size() == 32u * 25u * 3u);
    for (float v : map.data) CHECK(v == 0.0f);
  }

  SUBCASE("sinusoidal green modulation fills each row's full range") {
    const FrameSequence seq = green_modulated_sequence(64, 32.0, 1.5, 18.0);
    const LandmarkTrack lms = testutil::centered_landmarks(64, 40, 40);
    ClipWindow clip;
    clip.start_frame = 0;
    clip.length = 64;
    clip.step_frames = 64;
    const SpatialTemporalMap map = build_stmap(seq, lms, clip, 2, 2, ColorSpace::kYuv, schema);
    for (int b = 0; b < map.n_blocks; ++b)
      for (int c = 0; c < map.channels; ++c) {
        float lo = 256.0f, hi = -1.0f;
        for (int t = 0; t < map.t_frames; ++t) {
          lo = std::min(lo, map.at(t, b, c));
          hi = std::max(hi, map.at(t, b, c));
        }
        CHECK(lo == doctest::Approx(0.0));
        CHECK(hi == doctest::Approx(255.0));
      }
  }

  SUBCASE("single-channel clips produce c=1 maps") {
    FrameSequence seq = testutil::constant_sequence(16, 40, 40, 1, 90);
    for (int t = 0; t < 16; ++t)
      seq.frames[static_cast<std::size_t>(t)].at(5, 5, 0) = static_cast<std::uint8_t>(t);
    const LandmarkTrack lms = testutil::centered_landmarks(16, 40, 40);
    ClipWindow clip;
    clip.start_frame = 0;
    clip.length = 16;
    clip.step_frames = 16;
    const SpatialTemporalMap map = build_stmap(seq, lms, clip, 2, 2, ColorSpace::kRgb, schema);
    CHECK(map.channels == 1);
    CHECK(map.n_blocks == 4);
  }

  SUBCASE("invalid-landmark frames are interpolated, all-invalid clips rejected") {
    const FrameSequence seq = green_modulated_sequence(32, 32.0, 1.5, 18.0);
    LandmarkTrack lms = testutil::centered_landmarks(32, 40, 40);
    lms.valid[10] = 0;
    lms.valid[11] = 0;
    ClipWindow clip;
    clip.start_frame = 0;
    clip.length = 32;
    clip.step_frames = 32;
    const SpatialTemporalMap map = build_stmap(seq, lms, clip, 2, 2, ColorSpace::kYuv, schema);
    for (float v : map.data) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0f);
      CHECK(v <= 255.0f);
    }

    LandmarkTrack none = lms;
    for (auto& f : none.valid) f = 0;
    CHECK_THROWS_AS(build_stmap(seq, none, clip, 2, 2, ColorSpace::kYuv, schema),
                    ValidationError);
  }

  SUBCASE("map is invariant to exact positive affine pixel transforms") {
    // Single-channel frames keep the skin mask all-true, so x -> 2x + 20
    // (exact in uint8 for values <= 117) only rescales each pooled row.
    Rng rng(5);
    FrameSequence seq = testutil::constant_sequence(24, 40, 40, 1, 0);
    for (Frame& f : seq.frames)
      for (auto& px : f.data) px = static_cast<std::uint8_t>(rng.uniform_int(0, 80));
    FrameSequence scaled = seq;
    for (Frame& f : scaled.frames)
      for (auto& px : f.data) px = static_cast<std::uint8_t>(2 * px + 20);

    const LandmarkTrack lms = testutil::centered_landmarks(24, 40, 40);
    ClipWindow clip;
    clip.start_frame = 0;
    clip.length = 24;
    clip.step_frames = 24;
    const SpatialTemporalMap a = build_stmap(seq, lms, clip, 3, 3, ColorSpace::kRgb, schema);
    const SpatialTemporalMap b = build_stmap(scaled, lms, clip, 3, 3, ColorSpace::kRgb, schema);
    REQUIRE(a.data.size() == b.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i)
      CHECK(testutil::near(a.data[i], b.data[i], 1e-3));
  }
}

TEST_CASE("trace-space affine invariance of normalization") {
  Rng rng(9);
  BlockTraces traces;
  traces.t_frames = 20;
  traces.n_blocks = 3;
  traces.channels = 3;
  traces.fps = 30.0;
  traces.data.resize(20u * 3u * 3u);
  for (double& v : traces.data) v = 40.0 + 30.0 * rng.uniform();

  BlockTraces scaled = traces;
  for (double& v : scaled.data) v = 1.75 * v + 11.0;

  for (ColorSpace cs : {ColorSpace::kRgb, ColorSpace::kYuv}) {
    const SpatialTemporalMap a = normalize_traces(traces, cs);
    const SpatialTemporalMap b = normalize_traces(scaled, cs);
    for (std::size_t i = 0; i < a.data.size(); ++i)
      CHECK(testutil::near(a.data[i], b.data[i], 1e-3));
  }
}

TEST_CASE("masking augmentation") {
  BlockTraces traces;
  traces.t_frames = 300;
  traces.n_blocks = 2;
  traces.channels = 3;
  traces.fps = 30.0;
  traces.data.resize(300u * 2u * 3u);
  Rng rng(123);
  for (double& v : traces.data) v = rng.uniform(0.0, 200.0);
  const SpatialTemporalMap map = normalize_traces(traces, ColorSpace::kYuv);

  SUBCASE("prob=0 is bit-identical") {
    const SpatialTemporalMap out = mask_augment(map, 42, 10, 30, 0.0);
    CHECK(out.data == map.data);
  }
  SUBCASE("prob=1 masks a span of 10..30 frames, deterministically") {
    const SpatialTemporalMap out1 = mask_augment(map, 42, 10, 30, 1.0);
    const SpatialTemporalMap out2 = mask_augment(map, 42, 10, 30, 1.0);
    CHECK(out1.data == out2.data);

    // Find the masked span: frames where every value is 0.
    std::vector<int> zero_frames;
    for (int t = 0; t < out1.t_frames; ++t) {
      bool all_zero = true;
      for (int b = 0; b < out1.n_blocks && all_zero; ++b)
        for (int c = 0; c < out1.channels; ++c)
          if (out1.at(t, b, c) != 0.0f) {
            all_zero = false;
            break;
          }
      if (all_zero) zero_frames.push_back(t);
    }
    // The random input has no all-zero frames of its own, so the zero
    // frames are exactly the masked span.
    REQUIRE(zero_frames.size() >= 10);
    CHECK(zero_frames.size() <= 30);
    for (std::size_t i = 1; i < zero_frames.size(); ++i)
      CHECK(zero_frames[i] == zero_frames[i - 1] + 1);
  }
  SUBCASE("span lengths across seeds stay within bounds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const SpatialTemporalMap out = mask_augment(map, seed, 10, 30, 1.0);
      int zeros = 0;
      for (int t = 0; t < out.t_frames; ++t) {
        bool all_zero = true;
        for (int b = 0; b < out.n_blocks && all_zero; ++b)
          for (int c = 0; c < out.channels; ++c)
            if (out.at(t, b, c) != 0.0f) {
              all_zero = false;
              break;
            }
        if (all_zero) ++zeros;
      }
      CHECK(zeros >= 10);
      CHECK(zeros <= 30);
    }
  }
  SUBCASE("mask length must stay below the clip length") {
    CHECK_THROWS_AS(mask_augment(map, 1, 10, 300, 1.0), ValidationError);
  }
}

TEST_CASE("window labeling from a ground-truth trace") {
  GroundTruthTrace trace;
  trace.hr_samples = {{0, 70.0}, {1000, 74.0}, {2000, 78.0}, {9000, 100.0}};
  std::vector<std::int64_t> timestamps;
  for (int i = 0; i < 100; ++i) timestamps.push_back(i * 33);

  SUBCASE("label is the mean of samples inside the span") {
    std::vector<ClipWindow> windows(1);
    windows[0].start_frame = 0;
    windows[0].length = 70;  // spans [0, 2277] ms -> samples 70, 74, 78
    windows[0].step_frames = 70;
    label_windows(windows, timestamps, trace);
    REQUIRE(windows[0].gt_hr_bpm.has_value());
    CHECK(*windows[0].gt_hr_bpm == doctest::Approx(74.0));
  }
  SUBCASE("window with no interior sample takes the nearest one") {
    std::vector<ClipWindow> windows(1);
    windows[0].start_frame = 95;  // [3135, 3267] ms, nearest sample is 2000 ms
    windows[0].length = 5;
    windows[0].step_frames = 5;
    label_windows(windows, timestamps, trace);
    REQUIRE(windows[0].gt_hr_bpm.has_value());
    CHECK(*windows[0].gt_hr_bpm == doctest::Approx(78.0));
  }
  SUBCASE("window outside the sequence is rejected") {
    std::vector<ClipWindow> windows(1);
    windows[0].start_frame = 50;
    windows[0].length = 51;
    CHECK_THROWS_AS(label_windows(windows, timestamps, trace), ValidationError);
  }
}

TEST_CASE("map files round-trip with metadata") {
  TmpDir dir;
  BlockTraces traces;
  traces.t_frames = 25;
  traces.n_blocks = 4;
  traces.channels = 3;
  traces.fps = 30.5;
  traces.data.resize(25u * 4u * 3u);
  Rng rng(3);
  for (double& v : traces.data) v = rng.uniform(0.0, 255.0);

  SpatialTemporalMap map = normalize_traces(traces, ColorSpace::kYuv);
  map.subject_id = "p42";
  map.video_id = "v3";
  map.clip.start_frame = 150;
  map.clip.length = 25;
  map.clip.step_frames = 15;
  map.clip.gt_hr_bpm = 71.25;

  write_stmap(map, dir.file("clip.stm"));
  const SpatialTemporalMap loaded = load_stmap(dir.file("clip.stm"));
  CHECK(loaded.data == map.data);
  CHECK(loaded.t_frames == 25);
  CHECK(loaded.n_blocks == 4);
  CHECK(loaded.channels == 3);
  CHECK(loaded.fps == doctest::Approx(30.5));
  CHECK(loaded.colorspace == ColorSpace::kYuv);
  CHECK(loaded.subject_id == "p42");
  CHECK(loaded.video_id == "v3");
  CHECK(loaded.clip.start_frame == 150);
  CHECK(loaded.clip.length == 25);
  REQUIRE(loaded.clip.gt_hr_bpm.has_value());
  CHECK(*loaded.clip.gt_hr_bpm == doctest::Approx(71.25));

  SUBCASE("corrupt magic is rejected") {
    std::string bytes = testutil::read_bytes(dir.file("clip.stm"));
    bytes[0] = 'Z';
    testutil::write_text(dir.file("bad.stm"), bytes);
    testutil::write_text(dir.file("bad.stm.meta"),
                         testutil::read_bytes(dir.file("clip.stm.meta")));
    CHECK_THROWS_AS(load_stmap(dir.file("bad.stm")), IoError);
  }
}

TEST_CASE("colorspace names parse both ways") {
  CHECK(parse_colorspace("yuv") == ColorSpace::kYuv);
  CHECK(parse_colorspace("rgb") == ColorSpace::kRgb);
  CHECK(colorspace_name(ColorSpace::kYuv) == std::string("yuv"));
  CHECK(colorspace_name(ColorSpace::kRgb) == std::string("rgb"));
  CHECK_THROWS_AS(parse_colorspace("hsv"), ValidationError);
}
