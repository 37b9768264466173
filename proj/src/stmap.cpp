// SPDX-License-Identifier: Apache-2.0

#include "rhythmkit/stmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "rhythmkit/rng.hpp"

namespace rhythmkit {

namespace {

constexpr char kMapMagic[4] = {'R', 'K', 'M', '1'};

std::uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32le(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32le(std::istream& in) {
  const std::uint32_t bits = read_u32le(in);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

void write_f32le(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  write_u32le(out, bits);
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

ColorSpace parse_colorspace(const std::string& name) {
  if (name == "rgb") return ColorSpace::kRgb;
  if (name == "yuv") return ColorSpace::kYuv;
  throw ValidationError("unknown colorspace: '" + name + "' (want rgb or yuv)");
}

std::string colorspace_name(ColorSpace cs) {
  return cs == ColorSpace::kRgb ? "rgb" : "yuv";
}

std::vector<double> block_mean(const AlignedFace& face, const Rect& region, const Mask& mask) {
  if (region.width() <= 0 || region.height() <= 0) throw ValidationError("empty region");
  if (region.x0 < 0 || region.y0 < 0 || region.x1 > face.width || region.y1 > face.height)
    throw ValidationError("region outside face crop");
  if (mask.width != face.width || mask.height != face.height)
    throw ValidationError("mask size mismatch");

  const int c = face.channels;
  std::vector<double> masked_sum(static_cast<std::size_t>(c), 0.0);
  std::vector<double> valid_sum(static_cast<std::size_t>(c), 0.0);
  long long masked_count = 0, valid_count = 0;
  for (int y = region.y0; y < region.y1; ++y) {
    for (int x = region.x0; x < region.x1; ++x) {
      if (!face.valid_at(y, x)) continue;
      ++valid_count;
      const bool in_mask = mask.at(y, x);
      if (in_mask) ++masked_count;
      for (int ch = 0; ch < c; ++ch) {
        const double v = face.at(y, x, ch);
        valid_sum[static_cast<std::size_t>(ch)] += v;
        if (in_mask) masked_sum[static_cast<std::size_t>(ch)] += v;
      }
    }
  }

  std::vector<double> out(static_cast<std::size_t>(c), 0.0);
  const double coverage = static_cast<double>(masked_count) / static_cast<double>(region.area());
  if (coverage >= 0.05) {
    for (int ch = 0; ch < c; ++ch)
      out[static_cast<std::size_t>(ch)] = masked_sum[static_cast<std::size_t>(ch)] / masked_count;
  } else if (valid_count > 0) {
    for (int ch = 0; ch < c; ++ch)
      out[static_cast<std::size_t>(ch)] = valid_sum[static_cast<std::size_t>(ch)] / valid_count;
  }
  return out;
}

std::array<double, 3> rgb_to_yuv(const std::array<double, 3>& rgb) {
  const double r = rgb[0], g = rgb[1], b = rgb[2];
  return {0.299 * r + 0.587 * g + 0.114 * b,
          -0.169 * r - 0.331 * g + 0.5 * b + 128.0,
          0.5 * r - 0.419 * g - 0.081 * b + 128.0};
}

std::vector<ClipWindow> slide_windows(int seq_len, double fps, int win_frames,
                                      double step_seconds) {
  if (seq_len <= 0) throw ValidationError("empty sequence");
  if (win_frames <= 0) throw ValidationError("window length must be positive");
  if (win_frames > seq_len) throw ValidationError("window longer than sequence");
  if (fps <= 0.0) throw ValidationError("fps must be positive");
  const int step = static_cast<int>(std::lround(step_seconds * fps));
  if (step < 1) throw ValidationError("step rounds to zero frames");

  std::vector<ClipWindow> windows;
  for (int start = 0; start + win_frames <= seq_len; start += step) {
    ClipWindow w;
    w.start_frame = start;
    w.length = win_frames;
    w.step_frames = step;
    windows.push_back(w);
  }
  return windows;
}

std::vector<double> minmax_normalize_row(const std::vector<double>& row) {
  std::vector<double> out(row.size(), 0.0);
  if (row.empty()) return out;
  const auto [min_it, max_it] = std::minmax_element(row.begin(), row.end());
  const double lo = *min_it, hi = *max_it;
  if (hi == lo) return out;  // constant row → all zeros
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = (row[i] - lo) * scale;
  return out;
}

BlockTraces extract_block_traces(const FrameSequence& seq, const LandmarkTrack& landmarks,
                                 const ClipWindow& clip, int rows, int cols,
                                 const LandmarkSchema& schema) {
  if (clip.start_frame < 0 || clip.length <= 0 ||
      clip.start_frame + clip.length > static_cast<int>(seq.size()))
    throw ValidationError("clip window outside sequence");
  if (landmarks.size() != static_cast<int>(seq.size()))
    throw ValidationError("landmark track length mismatch");

  const int T = clip.length;
  const int n = rows * cols;
  const int c = seq.frames.empty() ? 0 : seq.frames.front().channels;

  BlockTraces traces;
  traces.t_frames = T;
  traces.n_blocks = n;
  traces.channels = c;
  traces.fps = seq.nominal_fps;
  traces.data.assign(static_cast<std::size_t>(T) * n * c,
                     std::numeric_limits<double>::quiet_NaN());

  std::vector<int> valid_ts;
  for (int t = 0; t < T; ++t) {
    const int f = clip.start_frame + t;
    if (!landmarks.valid[static_cast<std::size_t>(f)]) continue;
    const FaceBox box = face_box(landmarks.points[static_cast<std::size_t>(f)], schema);
    const AlignedFace face = align_face(seq.frames[static_cast<std::size_t>(f)], box);
    const Mask mask = skin_mask(face);
    const RoiGrid grid = grid_blocks(face, rows, cols);
    for (int b = 0; b < n; ++b) {
      const std::vector<double> means =
          block_mean(face, grid.regions[static_cast<std::size_t>(b)], mask);
      for (int ch = 0; ch < c; ++ch) traces.at(t, b, ch) = means[static_cast<std::size_t>(ch)];
    }
    valid_ts.push_back(t);
  }
  if (valid_ts.empty()) throw ValidationError("all frames invalid");

  // Fill invalid frames: linear interpolation between the bracketing valid
  // frames, nearest-valid extension at the clip edges.
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      std::size_t next_valid = 0;
      for (int t = 0; t < T; ++t) {
        if (std::isfinite(traces.at(t, b, ch))) continue;
        while (next_valid < valid_ts.size() && valid_ts[next_valid] < t) ++next_valid;
        if (next_valid == 0) {
          traces.at(t, b, ch) = traces.at(valid_ts.front(), b, ch);
        } else if (next_valid == valid_ts.size()) {
          traces.at(t, b, ch) = traces.at(valid_ts.back(), b, ch);
        } else {
          const int t0 = valid_ts[next_valid - 1], t1 = valid_ts[next_valid];
          const double w = static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
          traces.at(t, b, ch) =
              (1.0 - w) * traces.at(t0, b, ch) + w * traces.at(t1, b, ch);
        }
      }
    }
  }
  return traces;
}

SpatialTemporalMap normalize_traces(const BlockTraces& traces, ColorSpace colorspace) {
  if (colorspace == ColorSpace::kYuv && traces.channels != 3)
    throw ValidationError("yuv transform needs 3 channels");

  SpatialTemporalMap map;
  map.t_frames = traces.t_frames;
  map.n_blocks = traces.n_blocks;
  map.channels = traces.channels;
  map.fps = traces.fps;
  map.colorspace = colorspace;
  map.data.assign(static_cast<std::size_t>(traces.t_frames) * traces.n_blocks * traces.channels,
                  0.0f);

  // Transform per frame/block, then min-max each (block, channel) row.
  std::vector<double> row(static_cast<std::size_t>(traces.t_frames));
  for (int b = 0; b < traces.n_blocks; ++b) {
    for (int ch = 0; ch < traces.channels; ++ch) {
      for (int t = 0; t < traces.t_frames; ++t) {
        if (colorspace == ColorSpace::kYuv) {
          const std::array<double, 3> yuv =
              rgb_to_yuv({traces.at(t, b, 0), traces.at(t, b, 1), traces.at(t, b, 2)});
          row[static_cast<std::size_t>(t)] = yuv[static_cast<std::size_t>(ch)];
        } else {
          row[static_cast<std::size_t>(t)] = traces.at(t, b, ch);
        }
      }
      const std::vector<double> normed = minmax_normalize_row(row);
      for (int t = 0; t < traces.t_frames; ++t)
        map.at(t, b, ch) = static_cast<float>(normed[static_cast<std::size_t>(t)]);
    }
  }
  return map;
}

SpatialTemporalMap build_stmap(const FrameSequence& seq, const LandmarkTrack& landmarks,
                               const ClipWindow& clip, int rows, int cols,
                               ColorSpace colorspace, const LandmarkSchema& schema) {
  const BlockTraces traces = extract_block_traces(seq, landmarks, clip, rows, cols, schema);
  SpatialTemporalMap map = normalize_traces(traces, colorspace);
  map.clip = clip;
  map.subject_id = seq.subject_id;
  map.video_id = seq.video_id;
  return map;
}

SpatialTemporalMap mask_augment(const SpatialTemporalMap& map, std::uint64_t rng_seed,
                                int min_len, int max_len, double prob) {
  if (min_len < 1 || max_len < min_len) throw ValidationError("bad mask length range");
  if (max_len >= map.t_frames) throw ValidationError("mask length must be below T");
  if (prob < 0.0 || prob > 1.0) throw ValidationError("probability outside [0, 1]");

  SpatialTemporalMap out = map;
  Rng rng(rng_seed);
  if (rng.uniform() >= prob) return out;
  const int len = rng.uniform_int(min_len, max_len);
  const int start = rng.uniform_int(0, map.t_frames - len);
  for (int t = start; t < start + len; ++t)
    for (int b = 0; b < map.n_blocks; ++b)
      for (int ch = 0; ch < map.channels; ++ch) out.at(t, b, ch) = 0.0f;
  return out;
}

void label_windows(std::vector<ClipWindow>& windows, const std::vector<std::int64_t>& timestamps,
                   const GroundTruthTrace& trace) {
  if (trace.hr_samples.empty()) throw ValidationError("empty trace");
  for (ClipWindow& w : windows) {
    if (w.start_frame < 0 || w.length <= 0 ||
        w.start_frame + w.length > static_cast<int>(timestamps.size()))
      throw ValidationError("clip window outside sequence");
    const std::int64_t t0 = timestamps[static_cast<std::size_t>(w.start_frame)];
    const std::int64_t t1 = timestamps[static_cast<std::size_t>(w.start_frame + w.length - 1)];
    double sum = 0.0;
    int count = 0;
    for (const auto& [t, hr] : trace.hr_samples) {
      if (t >= t0 && t <= t1) {
        sum += hr;
        ++count;
      }
    }
    if (count > 0) {
      w.gt_hr_bpm = sum / count;
    } else {
      // No sample inside the span: take the one nearest the window midpoint.
      const double mid = static_cast<double>(t0 + t1) / 2.0;
      double best_dist = std::numeric_limits<double>::infinity();
      double best_hr = trace.hr_samples.front().second;
      for (const auto& [t, hr] : trace.hr_samples) {
        const double d = std::abs(static_cast<double>(t) - mid);
        if (d < best_dist) {
          best_dist = d;
          best_hr = hr;
        }
      }
      w.gt_hr_bpm = best_hr;
    }
  }
}

void write_stmap(const SpatialTemporalMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMapMagic, 4);
  write_u32le(out, static_cast<std::uint32_t>(map.t_frames));
  write_u32le(out, static_cast<std::uint32_t>(map.n_blocks));
  write_u32le(out, static_cast<std::uint32_t>(map.channels));
  write_f32le(out, static_cast<float>(map.fps));
  for (float v : map.data) write_f32le(out, v);
  if (!out) throw IoError("short write: " + path);

  std::ofstream meta(path + ".meta");
  if (!meta) throw IoError("cannot write " + path + ".meta");
  meta << std::setprecision(std::numeric_limits<double>::max_digits10);
  meta << "subject_id=" << map.subject_id << "\n";
  meta << "video_id=" << map.video_id << "\n";
  meta << "colorspace=" << colorspace_name(map.colorspace) << "\n";
  meta << "clip_start=" << map.clip.start_frame << "\n";
  meta << "clip_length=" << map.clip.length << "\n";
  meta << "clip_step=" << map.clip.step_frames << "\n";
  if (map.clip.gt_hr_bpm) meta << "gt_hr_bpm=" << *map.clip.gt_hr_bpm << "\n";
}

SpatialTemporalMap load_stmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMapMagic, 4) != 0)
    throw IoError("bad map magic (want RKM1): " + path);

  SpatialTemporalMap map;
  map.t_frames = static_cast<int>(read_u32le(in));
  map.n_blocks = static_cast<int>(read_u32le(in));
  map.channels = static_cast<int>(read_u32le(in));
  map.fps = read_f32le(in);
  if (!in || map.t_frames <= 0 || map.n_blocks <= 0 || map.channels <= 0 || map.fps <= 0.0)
    throw ValidationError("bad map header: " + path);
  const std::size_t total =
      static_cast<std::size_t>(map.t_frames) * map.n_blocks * map.channels;
  map.data.resize(total);
  for (std::size_t i = 0; i < total; ++i) map.data[i] = read_f32le(in);
  if (!in) throw ValidationError("map payload shorter than header promises: " + path);

  const std::string meta_path = path + ".meta";
  std::ifstream meta(meta_path);
  if (meta) {
    std::string line;
    while (std::getline(meta, line)) {
      const std::string stripped = trim(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = trim(stripped.substr(0, eq));
      const std::string value = trim(stripped.substr(eq + 1));
      try {
        if (key == "subject_id") map.subject_id = value;
        else if (key == "video_id") map.video_id = value;
        else if (key == "colorspace") map.colorspace = parse_colorspace(value);
        else if (key == "clip_start") map.clip.start_frame = std::stoi(value);
        else if (key == "clip_length") map.clip.length = std::stoi(value);
        else if (key == "clip_step") map.clip.step_frames = std::stoi(value);
        else if (key == "gt_hr_bpm") map.clip.gt_hr_bpm = std::stod(value);
      } catch (const std::exception&) {
        throw ValidationError("bad meta value for '" + key + "' in " + meta_path);
      }
    }
  }
  return map;
}

}  // namespace rhythmkit
