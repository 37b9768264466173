// SPDX-License-Identifier: Apache-2.0

#include "rhythmkit/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

namespace rhythmkit {

namespace fs = std::filesystem;

namespace {

constexpr char kFramesMagic[4] = {'R', 'K', 'F', '1'};

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

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string("non-numeric ") + what + ": '" + s + "'");
  }
}

std::int64_t parse_i64(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string("non-numeric ") + what + ": '" + s + "'");
  }
}

}  // namespace

FrameSequence load_frame_sequence(const std::string& video_dir) {
  const fs::path dir(video_dir);
  const fs::path frames_path = dir / "frames.bin";
  const fs::path manifest_path = dir / "manifest.csv";
  if (!fs::exists(frames_path)) throw IoError("missing file: " + frames_path.string());
  if (!fs::exists(manifest_path)) throw IoError("missing file: " + manifest_path.string());

  // Manifest first: frame count and timestamps.
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open " + manifest_path.string());
  std::string line;
  double fps_header = 0.0;
  bool have_fps = false;
  std::vector<std::int64_t> timestamps;
  bool header_seen = false;
  while (std::getline(manifest, line)) {
    if (line.empty() || line == "\r") continue;
    if (line[0] == '#') {
      const auto eq = line.find("fps=");
      if (eq != std::string::npos) {
        fps_header = parse_double(line.substr(eq + 4), "fps");
        have_fps = true;
      }
      continue;
    }
    if (!header_seen) {  // "frame_index,timestamp_ms"
      header_seen = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() < 2) throw ValidationError("manifest row needs frame_index,timestamp_ms");
    const std::int64_t ts = parse_i64(fields[1], "timestamp_ms");
    if (ts < 0) throw ValidationError("negative timestamp");
    if (!timestamps.empty() && ts <= timestamps.back())
      throw ValidationError("non-increasing timestamps");
    timestamps.push_back(ts);
  }
  if (timestamps.empty()) throw ValidationError("empty sequence");

  std::ifstream bin(frames_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + frames_path.string());
  char magic[4];
  bin.read(magic, 4);
  if (!bin || std::memcmp(magic, kFramesMagic, 4) != 0)
    throw IoError("bad frames.bin magic (want RKF1)");
  const std::uint32_t width = read_u32le(bin);
  const std::uint32_t height = read_u32le(bin);
  const std::uint32_t channels = read_u32le(bin);
  if (!bin || width == 0 || height == 0 || (channels != 1 && channels != 3))
    throw ValidationError("bad frame dimensions in header");

  const std::size_t frame_bytes = static_cast<std::size_t>(width) * height * channels;
  FrameSequence seq;
  seq.timestamps_ms = std::move(timestamps);
  seq.frames.reserve(seq.timestamps_ms.size());
  for (std::size_t i = 0; i < seq.timestamps_ms.size(); ++i) {
    Frame f;
    f.width = static_cast<int>(width);
    f.height = static_cast<int>(height);
    f.channels = static_cast<int>(channels);
    f.data.resize(frame_bytes);
    bin.read(reinterpret_cast<char*>(f.data.data()), static_cast<std::streamsize>(frame_bytes));
    if (!bin) throw ValidationError("dimension mismatch between header and payload");
    seq.frames.push_back(std::move(f));
  }
  // Trailing bytes mean the manifest undercounts the payload.
  bin.peek();
  if (!bin.eof()) throw ValidationError("dimension mismatch between header and payload");

  if (have_fps) {
    if (fps_header <= 0.0) throw ValidationError("fps must be positive");
    seq.nominal_fps = fps_header;
  } else if (seq.timestamps_ms.size() >= 2) {
    std::vector<std::int64_t> dts;
    dts.reserve(seq.timestamps_ms.size() - 1);
    for (std::size_t i = 1; i < seq.timestamps_ms.size(); ++i)
      dts.push_back(seq.timestamps_ms[i] - seq.timestamps_ms[i - 1]);
    std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
    seq.nominal_fps = 1000.0 / static_cast<double>(dts[dts.size() / 2]);
  } else {
    seq.nominal_fps = 30.0;  // single frame, rate unknowable
  }

  seq.video_id = dir.filename().string();
  seq.subject_id = dir.has_parent_path() ? dir.parent_path().filename().string() : "";
  return seq;
}

void write_frame_sequence(const FrameSequence& seq, const std::string& video_dir) {
  if (seq.frames.empty()) throw ValidationError("empty sequence");
  if (seq.timestamps_ms.size() != seq.frames.size())
    throw ValidationError("timestamps/frames length mismatch");
  const fs::path dir(video_dir);
  fs::create_directories(dir);

  const Frame& f0 = seq.frames.front();
  std::ofstream bin(dir / "frames.bin", std::ios::binary);
  if (!bin) throw IoError("cannot write frames.bin in " + video_dir);
  bin.write(kFramesMagic, 4);
  write_u32le(bin, static_cast<std::uint32_t>(f0.width));
  write_u32le(bin, static_cast<std::uint32_t>(f0.height));
  write_u32le(bin, static_cast<std::uint32_t>(f0.channels));
  for (const Frame& f : seq.frames) {
    if (f.width != f0.width || f.height != f0.height || f.channels != f0.channels)
      throw ValidationError("frames differ in dimensions");
    bin.write(reinterpret_cast<const char*>(f.data.data()),
              static_cast<std::streamsize>(f.data.size()));
  }

  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("cannot write manifest.csv in " + video_dir);
  manifest << std::setprecision(std::numeric_limits<double>::max_digits10);
  manifest << "# fps=" << seq.nominal_fps << "\n";
  manifest << "frame_index,timestamp_ms\n";
  for (std::size_t i = 0; i < seq.timestamps_ms.size(); ++i)
    manifest << i << "," << seq.timestamps_ms[i] << "\n";
}

LandmarkTrack load_landmarks(const std::string& csv_path, int n_frames) {
  if (n_frames < 0) throw ValidationError("negative frame count");
  std::ifstream in(csv_path);
  if (!in) throw IoError("missing file: " + csv_path);
  LandmarkTrack track;
  track.points.resize(static_cast<std::size_t>(n_frames));
  track.valid.assign(static_cast<std::size_t>(n_frames), 0);

  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 1 + 2 * kNumLandmarks)
      throw ValidationError("landmark arity: expected " +
                            std::to_string(1 + 2 * kNumLandmarks) + " fields, got " +
                            std::to_string(fields.size()));
    const std::int64_t idx = parse_i64(fields[0], "frame_index");
    if (idx < 0 || idx >= n_frames) continue;  // rows beyond the sequence are ignored
    auto& pts = track.points[static_cast<std::size_t>(idx)];
    for (int p = 0; p < kNumLandmarks; ++p) {
      pts[static_cast<std::size_t>(p)].x = parse_double(fields[1 + 2 * p], "coordinate");
      pts[static_cast<std::size_t>(p)].y = parse_double(fields[2 + 2 * p], "coordinate");
    }
    track.valid[static_cast<std::size_t>(idx)] = 1;
  }
  return track;
}

void write_landmarks(const LandmarkTrack& track, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "frame_index";
  for (int p = 0; p < kNumLandmarks; ++p) out << ",x" << p << ",y" << p;
  out << "\n";
  for (int i = 0; i < track.size(); ++i) {
    if (!track.valid[static_cast<std::size_t>(i)]) continue;
    out << i;
    for (const Vec2& pt : track.points[static_cast<std::size_t>(i)])
      out << "," << pt.x << "," << pt.y;
    out << "\n";
  }
}

GroundTruthTrace load_ground_truth(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("missing file: " + csv_path);
  GroundTruthTrace trace;
  std::string line;
  bool header_seen = false;
  std::int64_t prev_t = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() < 2) throw ValidationError("gt row needs time_ms,hr_bpm");
    const std::int64_t t = parse_i64(fields[0], "time_ms");
    const double hr = parse_double(fields[1], "hr_bpm");
    if (prev_t >= 0 && t < prev_t) throw ValidationError("times decreasing");
    if (hr < kHrMinBpm || hr > kHrMaxBpm)
      throw ValidationError("hr out of range: " + fields[1]);
    trace.hr_samples.emplace_back(t, hr);
    if (fields.size() >= 3 && !fields[2].empty())
      trace.bvp_samples.emplace_back(t, parse_double(fields[2], "bvp"));
    prev_t = t;
  }
  if (trace.hr_samples.empty()) throw ValidationError("empty trace");
  return trace;
}

void write_ground_truth(const GroundTruthTrace& trace, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const bool with_bvp = trace.bvp_samples.size() == trace.hr_samples.size();
  out << (with_bvp ? "time_ms,hr_bpm,bvp\n" : "time_ms,hr_bpm\n");
  for (std::size_t i = 0; i < trace.hr_samples.size(); ++i) {
    out << trace.hr_samples[i].first << "," << trace.hr_samples[i].second;
    if (with_bvp) out << "," << trace.bvp_samples[i].second;
    out << "\n";
  }
}

FrameSequence resample_sequence(const FrameSequence& seq, double target_fps) {
  if (target_fps <= 0.0) throw ValidationError("target_fps must be positive");
  if (target_fps > seq.nominal_fps)
    throw ValidationError("target_fps exceeds nominal_fps");
  if (seq.frames.empty()) throw ValidationError("empty sequence");

  const double step_ms = 1000.0 / target_fps;
  const std::int64_t t0 = seq.timestamps_ms.front();
  const std::int64_t t_last = seq.timestamps_ms.back();

  FrameSequence out;
  out.nominal_fps = target_fps;
  out.subject_id = seq.subject_id;
  out.video_id = seq.video_id;
  std::size_t cursor = 0;
  for (std::int64_t k = 0;; ++k) {
    const double grid = static_cast<double>(t0) + static_cast<double>(k) * step_ms;
    const std::int64_t grid_ms = static_cast<std::int64_t>(std::llround(grid));
    if (grid_ms > t_last) break;
    // Nearest source timestamp; the cursor only moves forward.
    while (cursor + 1 < seq.timestamps_ms.size() &&
           std::abs(static_cast<double>(seq.timestamps_ms[cursor + 1]) - grid) <=
               std::abs(static_cast<double>(seq.timestamps_ms[cursor]) - grid)) {
      ++cursor;
    }
    out.frames.push_back(seq.frames[cursor]);
    if (!out.timestamps_ms.empty() && grid_ms <= out.timestamps_ms.back())
      throw ValidationError("resample grid collapsed to non-increasing timestamps");
    out.timestamps_ms.push_back(grid_ms);
  }
  return out;
}

LandmarkTrack smooth_landmarks(const LandmarkTrack& track, int window) {
  if (window <= 0 || window % 2 == 0) throw ValidationError("window must be odd");
  const int n = track.size();
  LandmarkTrack out = track;
  const int half = window / 2;
  for (int i = 0; i < n; ++i) {
    if (!track.valid[static_cast<std::size_t>(i)]) continue;
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    for (int p = 0; p < kNumLandmarks; ++p) {
      double sx = 0.0, sy = 0.0;
      int count = 0;
      for (int j = lo; j <= hi; ++j) {
        if (!track.valid[static_cast<std::size_t>(j)]) continue;
        sx += track.points[static_cast<std::size_t>(j)][static_cast<std::size_t>(p)].x;
        sy += track.points[static_cast<std::size_t>(j)][static_cast<std::size_t>(p)].y;
        ++count;
      }
      out.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)] = {sx / count,
                                                                              sy / count};
    }
  }
  return out;
}

}  // namespace rhythmkit
