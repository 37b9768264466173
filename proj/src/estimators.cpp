// SPDX-License-Identifier: Apache-2.0

#include "rhythmkit/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rhythmkit {

namespace {

void require_rgb(const BlockTraces& traces) {
  if (traces.channels != 3) throw ValidationError("estimator needs 3-channel RGB traces");
  if (traces.t_frames < 2) throw ValidationError("trace too short");
  if (traces.fps <= 0.0) throw ValidationError("fps must be positive");
}

// Clips with no temporal variation must fail with the no-peak error before
// any conditioning (detrending numerical residue would otherwise masquerade
// as signal).
void require_temporal_variation(const BlockTraces& traces) {
  for (int b = 0; b < traces.n_blocks; ++b) {
    for (int ch = 0; ch < traces.channels; ++ch) {
      const double first = traces.at(0, b, ch);
      for (int t = 1; t < traces.t_frames; ++t)
        if (traces.at(t, b, ch) != first) return;
    }
  }
  throw NoPeakError("no spectral peak");
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double stddev_of(const std::vector<double>& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

double range_of(const std::vector<double>& x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

HrEstimate condition_and_peak(PulseSignal s) {
  s = detrend(s, detrend_lambda_for_fps(s.fps));
  s = bandpass(s);
  return spectral_peak_hr(s);
}

}  // namespace

PulseSignal spatial_average_trace(const BlockTraces& traces, int channel) {
  if (channel < 0 || channel >= traces.channels) throw ValidationError("channel out of range");
  PulseSignal s;
  s.fps = traces.fps;
  s.samples.resize(static_cast<std::size_t>(traces.t_frames));
  for (int t = 0; t < traces.t_frames; ++t) {
    double sum = 0.0;
    for (int b = 0; b < traces.n_blocks; ++b) sum += traces.at(t, b, channel);
    s.samples[static_cast<std::size_t>(t)] = sum / static_cast<double>(traces.n_blocks);
  }
  return s;
}

HrEstimate estimate_green(const BlockTraces& traces) {
  require_rgb(traces);
  require_temporal_variation(traces);
  return condition_and_peak(spatial_average_trace(traces, 1));
}

HrEstimate estimate_chrom(const BlockTraces& traces) {
  require_rgb(traces);
  require_temporal_variation(traces);

  const int T = traces.t_frames;
  std::vector<double> s_avg(static_cast<std::size_t>(T), 0.0);
  std::vector<double> x_avg(static_cast<std::size_t>(T), 0.0);
  std::vector<double> yc_avg(static_cast<std::size_t>(T), 0.0);
  std::vector<double> rn(static_cast<std::size_t>(T)), gn(static_cast<std::size_t>(T)),
      bn(static_cast<std::size_t>(T));
  std::vector<double> xs(static_cast<std::size_t>(T)), ycs(static_cast<std::size_t>(T));

  for (int b = 0; b < traces.n_blocks; ++b) {
    double mr = 0.0, mg = 0.0, mb = 0.0;
    for (int t = 0; t < T; ++t) {
      mr += traces.at(t, b, 0);
      mg += traces.at(t, b, 1);
      mb += traces.at(t, b, 2);
    }
    mr /= T;
    mg /= T;
    mb /= T;
    if (std::abs(mr) < 1e-12 || std::abs(mg) < 1e-12 || std::abs(mb) < 1e-12)
      throw ValidationError("degenerate channel");

    for (int t = 0; t < T; ++t) {
      rn[static_cast<std::size_t>(t)] = traces.at(t, b, 0) / mr;
      gn[static_cast<std::size_t>(t)] = traces.at(t, b, 1) / mg;
      bn[static_cast<std::size_t>(t)] = traces.at(t, b, 2) / mb;
    }
    for (int t = 0; t < T; ++t) {
      const std::size_t u = static_cast<std::size_t>(t);
      xs[u] = 3.0 * rn[u] - 2.0 * gn[u];
      ycs[u] = 1.5 * rn[u] + gn[u] - 1.5 * bn[u];
    }
    const double sx = stddev_of(xs);
    const double sy = stddev_of(ycs);
    const double alpha = (sy > 0.0) ? sx / sy : 0.0;
    for (int t = 0; t < T; ++t) {
      const std::size_t u = static_cast<std::size_t>(t);
      const double s = xs[u] - alpha * ycs[u];
      s_avg[u] += s / traces.n_blocks;
      x_avg[u] += xs[u] / traces.n_blocks;
      yc_avg[u] += ycs[u] / traces.n_blocks;
    }
  }

  // Equal channels make X and Yc identical up to rounding, so S collapses to
  // numerical noise; treat that as "no pulse" rather than hunting a peak in
  // round-off.
  const double s_range = range_of(s_avg);
  const double ref_range = std::max({range_of(x_avg), range_of(yc_avg),
                                     std::numeric_limits<double>::min()});
  if (s_range <= 1e-9 * ref_range) throw NoPeakError("no spectral peak");

  PulseSignal s;
  s.fps = traces.fps;
  s.samples = std::move(s_avg);
  return condition_and_peak(std::move(s));
}

HrEstimate estimate_pos(const BlockTraces& traces) {
  require_rgb(traces);
  require_temporal_variation(traces);

  const int T = traces.t_frames;
  const int win = static_cast<int>(std::lround(1.6 * traces.fps));
  if (win < 2) throw ValidationError("window too short at this fps");
  if (win > T) throw ValidationError("window longer than clip");

  const PulseSignal r_t = spatial_average_trace(traces, 0);
  const PulseSignal g_t = spatial_average_trace(traces, 1);
  const PulseSignal b_t = spatial_average_trace(traces, 2);

  std::vector<double> h(static_cast<std::size_t>(T), 0.0);
  std::vector<double> s1(static_cast<std::size_t>(win)), s2(static_cast<std::size_t>(win));
  for (int m = 0; m + win <= T; ++m) {
    double mr = 0.0, mg = 0.0, mb = 0.0;
    for (int t = m; t < m + win; ++t) {
      mr += r_t.samples[static_cast<std::size_t>(t)];
      mg += g_t.samples[static_cast<std::size_t>(t)];
      mb += b_t.samples[static_cast<std::size_t>(t)];
    }
    mr /= win;
    mg /= win;
    mb /= win;
    if (std::abs(mr) < 1e-12 || std::abs(mg) < 1e-12 || std::abs(mb) < 1e-12)
      throw ValidationError("degenerate channel");

    for (int t = 0; t < win; ++t) {
      const std::size_t u = static_cast<std::size_t>(m + t);
      const double rn = r_t.samples[u] / mr;
      const double gn = g_t.samples[u] / mg;
      const double bn = b_t.samples[u] / mb;
      s1[static_cast<std::size_t>(t)] = gn - bn;
      s2[static_cast<std::size_t>(t)] = gn + bn - 2.0 * rn;
    }
    const double sig1 = stddev_of(s1);
    const double sig2 = stddev_of(s2);
    if (sig1 == 0.0 && sig2 == 0.0) continue;  // flat window contributes nothing
    const double alpha = (sig2 > 0.0) ? sig1 / sig2 : 0.0;

    double hm = 0.0;
    for (int t = 0; t < win; ++t)
      hm += s1[static_cast<std::size_t>(t)] + alpha * s2[static_cast<std::size_t>(t)];
    hm /= win;
    for (int t = 0; t < win; ++t) {
      const double v = s1[static_cast<std::size_t>(t)] + alpha * s2[static_cast<std::size_t>(t)];
      h[static_cast<std::size_t>(m + t)] += v - hm;
    }
  }

  if (range_of(h) == 0.0) throw NoPeakError("no spectral peak");
  PulseSignal s;
  s.fps = traces.fps;
  s.samples = std::move(h);
  return condition_and_peak(std::move(s));
}

HrEstimate estimate_trace(const std::string& method, const BlockTraces& traces) {
  if (method == "green") return estimate_green(traces);
  if (method == "chrom") return estimate_chrom(traces);
  if (method == "pos") return estimate_pos(traces);
  throw ValidationError("unknown method: '" + method + "' (want green, chrom or pos)");
}

}  // namespace rhythmkit
