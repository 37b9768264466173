// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "rhythmkit/estimators.hpp"
#include "rhythmkit/synth.hpp"
#include "rhythmkit/types.hpp"

using namespace rhythmkit;

namespace {

constexpr double kTwoPi = 6.283185307179586476925;

BlockTraces constant_traces(int t, int n, int c, double value) {
  BlockTraces tr;
  tr.t_frames = t;
  tr.n_blocks = n;
  tr.channels = c;
  tr.fps = 30.0;
  tr.data.assign(static_cast<std::size_t>(t) * n * c, value);
  return tr;
}

// All three channels carry the identical modulation.
BlockTraces equal_channel_traces(int t, int n) {
  BlockTraces tr = constant_traces(t, n, 3, 0.0);
  for (int i = 0; i < t; ++i) {
    const double v = 100.0 + 10.0 * std::sin(kTwoPi * 1.2 * i / tr.fps);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < 3; ++c) tr.at(i, b, c) = v;
  }
  return tr;
}

}  // namespace

TEST_CASE("green channel estimator") {
  SUBCASE("clean 72 bpm pulse recovered within 2 bpm") {
    SynthSpec spec = SynthSpec::constant_hr(72.0);
    spec.seed = 11;
    const BlockTraces tr = gen_synthetic_traces(spec, 25, 3);
    const HrEstimate est = estimate_green(tr);
    CHECK(testutil::near(est.hr_bpm, 72.0, 2.0));
  }
  SUBCASE("constant clip raises the no-peak error") {
    CHECK_THROWS_AS(estimate_green(constant_traces(300, 25, 3, 120.0)), NoPeakError);
  }
  SUBCASE("slow illumination drift filtered out") {
    SynthSpec spec = SynthSpec::constant_hr(72.0);
    spec.drift_freq_hz = 0.1;
    spec.drift_amp = 0.04;  // stronger than the pulse itself
    spec.seed = 12;
    const BlockTraces tr = gen_synthetic_traces(spec, 25, 3);
    const HrEstimate est = estimate_green(tr);
    CHECK(testutil::near(est.hr_bpm, 72.0, 3.0));
  }
}

TEST_CASE("chrominance estimator") {
  SUBCASE("common-mode motion noise cancelled") {
    SynthSpec spec = SynthSpec::constant_hr(72.0);
    spec.motion_sigma = 0.5;  // 25x the pulse amplitude, shared across channels
    spec.seed = 13;
    const BlockTraces tr = gen_synthetic_traces(spec, 25, 3);
    const HrEstimate est = estimate_chrom(tr);
    CHECK(testutil::near(est.hr_bpm, 72.0, 3.0));
  }
  SUBCASE("identical channels collapse to a constant projection") {
    // With R = G = B the two chrominance axes coincide, so the projected
    // signal has no variation left.
    CHECK_THROWS_AS(estimate_chrom(equal_channel_traces(300, 4)), NoPeakError);
  }
  SUBCASE("zero-mean channel rejected") {
    BlockTraces tr = constant_traces(300, 2, 3, 50.0);
    for (int t = 0; t < tr.t_frames; ++t)
      for (int b = 0; b < tr.n_blocks; ++b) tr.at(t, b, 0) = (t % 2 == 0) ? 1.0 : -1.0;
    CHECK_THROWS_WITH_AS(estimate_chrom(tr), doctest::Contains("degenerate channel"),
                         ValidationError);
  }
}

TEST_CASE("plane-orthogonal-to-skin estimator") {
  SUBCASE("clean 100 bpm pulse recovered within 2 bpm") {
    SynthSpec spec = SynthSpec::constant_hr(100.0);
    spec.seed = 14;
    const BlockTraces tr = gen_synthetic_traces(spec, 25, 3);
    const HrEstimate est = estimate_pos(tr);
    CHECK(testutil::near(est.hr_bpm, 100.0, 2.0));
  }
  SUBCASE("72 bpm with drift recovered within 3 bpm") {
    SynthSpec spec = SynthSpec::constant_hr(72.0);
    spec.drift_freq_hz = 0.1;
    spec.drift_amp = 0.04;
    spec.seed = 15;
    const BlockTraces tr = gen_synthetic_traces(spec, 25, 3);
    const HrEstimate est = estimate_pos(tr);
    CHECK(testutil::near(est.hr_bpm, 72.0, 3.0));
  }
  SUBCASE("window longer than the clip rejected") {
    // 1.6 s at 30 fps needs 48 frames; hand over 40.
    SynthSpec spec = SynthSpec::constant_hr(72.0);
    spec.duration_s = 40.0 / 30.0;
    const BlockTraces tr = gen_synthetic_traces(spec, 4, 3);
    CHECK_THROWS_AS(estimate_pos(tr), ValidationError);
  }
}

TEST_CASE("no estimator returns a number for a flat clip") {
  const BlockTraces flat = constant_traces(300, 9, 3, 90.0);
  CHECK_THROWS_AS(estimate_green(flat), NoPeakError);
  CHECK_THROWS_AS(estimate_chrom(flat), NoPeakError);
  CHECK_THROWS_AS(estimate_pos(flat), NoPeakError);
}

TEST_CASE("method dispatch by name") {
  SynthSpec spec = SynthSpec::constant_hr(90.0);
  spec.seed = 16;
  const BlockTraces tr = gen_synthetic_traces(spec, 25, 3);
  CHECK(estimate_trace("green", tr).hr_bpm == doctest::Approx(estimate_green(tr).hr_bpm));
  CHECK(estimate_trace("chrom", tr).hr_bpm == doctest::Approx(estimate_chrom(tr).hr_bpm));
  CHECK(estimate_trace("pos", tr).hr_bpm == doctest::Approx(estimate_pos(tr).hr_bpm));
  CHECK_THROWS_AS(estimate_trace("ica", tr), ValidationError);
}

TEST_CASE("spatial averaging of one channel") {
  BlockTraces tr = constant_traces(2, 2, 3, 0.0);
  // Frame 0: greens 10 and 30; frame 1: greens 20 and 60.
  tr.at(0, 0, 1) = 10.0;
  tr.at(0, 1, 1) = 30.0;
  tr.at(1, 0, 1) = 20.0;
  tr.at(1, 1, 1) = 60.0;
  const PulseSignal g = spatial_average_trace(tr, 1);
  REQUIRE(g.samples.size() == 2);
  CHECK(g.samples[0] == doctest::Approx(20.0));
  CHECK(g.samples[1] == doctest::Approx(40.0));
  CHECK(g.fps == doctest::Approx(30.0));
  CHECK_THROWS_AS(spatial_average_trace(tr, 3), ValidationError);
}
