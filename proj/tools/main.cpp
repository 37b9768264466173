// SPDX-License-Identifier: Apache-2.0
//
// rhythmkit — remote heart-rate estimation from face video.
//
// Subcommands:
//   extract   video layout -> spatial-temporal map files (.stm)
//   estimate  classical HR estimation (green/chrom/pos) -> CSV report
//   train     train the regression model on .stm files -> checkpoint
//   infer     model inference on videos or .stm files -> CSV report
//   evaluate  metrics over paired estimates or a labeled dataset
//   synth     synthetic videos / map datasets / pulse traces

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rhythmkit/estimators.hpp"
#include "rhythmkit/evaluation.hpp"
#include "rhythmkit/ingest.hpp"
#include "rhythmkit/model.hpp"
#include "rhythmkit/parallel.hpp"
#include "rhythmkit/rng.hpp"
#include "rhythmkit/synth.hpp"

namespace fs = std::filesystem;
using namespace rhythmkit;

namespace {

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

std::uint64_t env_seed_or(std::uint64_t fallback) {
  const char* env = std::getenv("RHYTHMKIT_SEED");
  if (!env || !*env) return fallback;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(env, &pos);
    if (env[pos] != '\0') throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ValidationError(std::string("RHYTHMKIT_SEED is not an unsigned integer: ") + env);
  }
}

std::pair<int, int> parse_grid(const std::string& text) {
  const std::size_t x = text.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument("no separator");
    std::size_t a = 0, b = 0;
    const int rows = std::stoi(text.substr(0, x), &a);
    const std::string tail = text.substr(x + 1);
    const int cols = std::stoi(tail, &b);
    if (a != x || b != tail.size() || rows < 1 || cols < 1)
      throw std::invalid_argument("bad fields");
    return {rows, cols};
  } catch (const std::exception&) {
    throw ValidationError("grid must look like 5x5, got: " + text);
  }
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

std::vector<fs::path> find_video_dirs(const std::string& root) {
  std::vector<fs::path> dirs;
  const fs::path base(root);
  if (!fs::exists(base)) throw IoError("missing path: " + root);
  if (fs::exists(base / "frames.bin")) {
    dirs.push_back(base);
  } else if (fs::is_directory(base)) {
    for (const auto& entry : fs::recursive_directory_iterator(base))
      if (entry.is_regular_file() && entry.path().filename() == "frames.bin")
        dirs.push_back(entry.path().parent_path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError("no video directories (frames.bin) under " + root);
  return dirs;
}

std::vector<fs::path> find_stm_files(const std::string& root) {
  std::vector<fs::path> files;
  const fs::path base(root);
  if (!fs::exists(base)) throw IoError("missing path: " + root);
  if (fs::is_directory(base)) {
    for (const auto& entry : fs::recursive_directory_iterator(base))
      if (entry.is_regular_file() && entry.path().extension() == ".stm")
        files.push_back(entry.path());
  } else if (base.extension() == ".stm") {
    files.push_back(base);
  }
  std::sort(files.begin(), files.end());
  return files;
}

bool is_video_input(const std::string& root) {
  const fs::path base(root);
  if (fs::exists(base / "frames.bin")) return true;
  if (!fs::is_directory(base)) return false;
  for (const auto& entry : fs::recursive_directory_iterator(base))
    if (entry.is_regular_file() && entry.path().filename() == "frames.bin") return true;
  return false;
}

LandmarkSchema load_schema_opt(const std::string& path) {
  return path.empty() ? LandmarkSchema::default_schema() : load_landmark_schema(path);
}

// One line of the HR report CSVs.
struct HrRow {
  std::string scope;  // "clip" or "video"
  std::string subject_id;
  std::string video_id;
  long long clip_start = 0;
  long long clip_length = 0;
  std::optional<double> hr_bpm;
  std::optional<double> snr_db;
  std::string status;  // "ok" or "no_peak"
};

void write_hr_csv(const std::vector<HrRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "scope,subject_id,video_id,clip_start,clip_length,hr_bpm,snr_db,status\n";
  for (const HrRow& r : rows) {
    out << r.scope << "," << r.subject_id << "," << r.video_id << "," << r.clip_start << ","
        << r.clip_length << ",";
    if (r.hr_bpm) out << format_double(*r.hr_bpm);
    out << ",";
    if (r.snr_db) out << format_double(*r.snr_db);
    out << "," << r.status << "\n";
  }
  if (!out) throw IoError("short write: " + path);
}

std::string clip_file_name(const SpatialTemporalMap& map) {
  std::ostringstream name;
  name << map.subject_id << "_" << map.video_id << "_w" << std::setw(6) << std::setfill('0')
       << map.clip.start_frame << ".stm";
  return name.str();
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractOpts {
  std::string input;
  std::string out;
  int window = 300;
  double step = 0.5;
  std::string grid = "5x5";
  std::string colorspace = "yuv";
  std::string schema_path;
  int smooth_window = 0;
  int jobs = 1;
};

int run_extract(const ExtractOpts& o) {
  const auto [rows, cols] = parse_grid(o.grid);
  const ColorSpace cs = parse_colorspace(o.colorspace);
  const LandmarkSchema schema = load_schema_opt(o.schema_path);
  fs::create_directories(o.out);

  const std::vector<fs::path> videos = find_video_dirs(o.input);
  long long total_clips = 0;
  for (const fs::path& vdir : videos) {
    const FrameSequence seq = load_frame_sequence(vdir.string());
    LandmarkTrack lms = load_landmarks((vdir / "landmarks.csv").string(), seq.size());
    if (o.smooth_window > 0) lms = smooth_landmarks(lms, o.smooth_window);

    GroundTruthTrace gt;
    if (fs::exists(vdir / "gt.csv")) gt = load_ground_truth((vdir / "gt.csv").string());

    std::vector<ClipWindow> windows = slide_windows(seq.size(), seq.nominal_fps, o.window, o.step);
    if (!gt.empty()) label_windows(windows, seq.timestamps_ms, gt);

    std::vector<SpatialTemporalMap> maps(windows.size());
    parallel_for(static_cast<int>(windows.size()), o.jobs, [&](int i) {
      maps[static_cast<std::size_t>(i)] = build_stmap(
          seq, lms, windows[static_cast<std::size_t>(i)], rows, cols, cs, schema);
    });
    for (const SpatialTemporalMap& map : maps)
      write_stmap(map, (fs::path(o.out) / clip_file_name(map)).string());
    total_clips += static_cast<long long>(windows.size());
  }
  std::cout << "wrote " << total_clips << " clip map(s) from " << videos.size()
            << " video(s) to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateOpts {
  std::string input;
  std::string out;
  std::string method = "green";
  int window = 300;
  double step = 0.5;
  std::string grid = "5x5";
  std::string schema_path;
  int jobs = 1;
};

void append_video_mean(std::vector<HrRow>& rows, const std::string& subject,
                       const std::string& video, long long n_frames,
                       const std::vector<double>& clip_hrs) {
  if (clip_hrs.empty())
    throw NoPeakError("no spectral peak in any clip of video " + video);
  double sum = 0.0;
  for (double hr : clip_hrs) sum += hr;
  HrRow row;
  row.scope = "video";
  row.subject_id = subject;
  row.video_id = video;
  row.clip_start = 0;
  row.clip_length = n_frames;
  row.hr_bpm = sum / static_cast<double>(clip_hrs.size());
  row.status = "ok";
  rows.push_back(row);
}

int run_estimate(const EstimateOpts& o) {
  std::vector<HrRow> rows;

  if (is_video_input(o.input)) {
    const auto [grid_rows, grid_cols] = parse_grid(o.grid);
    const LandmarkSchema schema = load_schema_opt(o.schema_path);
    for (const fs::path& vdir : find_video_dirs(o.input)) {
      const FrameSequence seq = load_frame_sequence(vdir.string());
      const LandmarkTrack lms = load_landmarks((vdir / "landmarks.csv").string(), seq.size());
      const std::vector<ClipWindow> windows =
          slide_windows(seq.size(), seq.nominal_fps, o.window, o.step);

      std::vector<std::optional<HrEstimate>> clip_est(windows.size());
      parallel_for(static_cast<int>(windows.size()), o.jobs, [&](int i) {
        const BlockTraces traces = extract_block_traces(
            seq, lms, windows[static_cast<std::size_t>(i)], grid_rows, grid_cols, schema);
        try {
          clip_est[static_cast<std::size_t>(i)] = estimate_trace(o.method, traces);
        } catch (const NoPeakError&) {
          clip_est[static_cast<std::size_t>(i)] = std::nullopt;
        }
      });

      std::vector<double> ok_hrs;
      for (std::size_t i = 0; i < windows.size(); ++i) {
        HrRow row;
        row.scope = "clip";
        row.subject_id = seq.subject_id;
        row.video_id = seq.video_id;
        row.clip_start = windows[i].start_frame;
        row.clip_length = windows[i].length;
        if (clip_est[i]) {
          row.hr_bpm = clip_est[i]->hr_bpm;
          row.snr_db = clip_est[i]->snr_db;
          row.status = "ok";
          ok_hrs.push_back(clip_est[i]->hr_bpm);
        } else {
          row.status = "no_peak";
        }
        rows.push_back(row);
      }
      append_video_mean(rows, seq.subject_id, seq.video_id, seq.size(), ok_hrs);
    }
  } else {
    const std::vector<fs::path> files = find_stm_files(o.input);
    if (files.empty()) throw IoError("no video layout or .stm files under " + o.input);
    if (o.method != "green")
      throw ValidationError("estimating from map files supports method green only (maps are "
                            "normalized; chrom/pos need raw traces)");
    // Group clips per video in file order.
    std::map<std::string, std::vector<double>> video_hrs;
    for (const fs::path& file : files) {
      const SpatialTemporalMap map = load_stmap(file.string());
      if (map.colorspace != ColorSpace::kRgb || map.channels != 3)
        throw ValidationError("estimating from map files needs rgb 3-channel maps: " +
                              file.string());
      BlockTraces traces;
      traces.t_frames = map.t_frames;
      traces.n_blocks = map.n_blocks;
      traces.channels = map.channels;
      traces.fps = map.fps;
      traces.data.assign(map.data.begin(), map.data.end());

      HrRow row;
      row.scope = "clip";
      row.subject_id = map.subject_id;
      row.video_id = map.video_id;
      row.clip_start = map.clip.start_frame;
      row.clip_length = map.t_frames;
      const std::string key = map.subject_id + "/" + map.video_id;
      try {
        const HrEstimate est = estimate_green(traces);
        row.hr_bpm = est.hr_bpm;
        row.snr_db = est.snr_db;
        row.status = "ok";
        video_hrs[key].push_back(est.hr_bpm);
      } catch (const NoPeakError&) {
        row.status = "no_peak";
        video_hrs[key];
      }
      rows.push_back(row);
    }
    for (const auto& [key, hrs] : video_hrs) {
      const std::size_t slash = key.find('/');
      append_video_mean(rows, key.substr(0, slash), key.substr(slash + 1), 0, hrs);
    }
  }

  write_hr_csv(rows, o.out);
  std::cout << "wrote " << rows.size() << " row(s) to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string data;
  std::string out;
  std::string config_path;
  std::string log_path;
  std::string grid = "5x5";
  TrainConfig config;
};

int run_train(const TrainOpts& o) {
  TrainConfig config = o.config;
  const auto [grid_rows, grid_cols] = parse_grid(o.grid);
  config.grid_rows = grid_rows;
  config.grid_cols = grid_cols;
  config.validate();

  const std::vector<fs::path> files = find_stm_files(o.data);
  if (files.empty()) throw IoError("no .stm files under " + o.data);
  std::vector<SpatialTemporalMap> dataset;
  dataset.reserve(files.size());
  for (const fs::path& file : files) dataset.push_back(load_stmap(file.string()));

  if (config.grid_rows * config.grid_cols != dataset.front().n_blocks)
    throw ValidationError("--grid does not match the dataset block count (" +
                          std::to_string(dataset.front().n_blocks) + " blocks per map)");
  config.colorspace = dataset.front().colorspace;

  TrainLog log;
  std::unique_ptr<FloatModel> model = train_model(dataset, config, &log);

  std::map<std::string, std::string> meta;
  meta["seed"] = std::to_string(config.seed);
  meta["epochs_run"] = std::to_string(log.epochs.size());
  save_model(*model, o.out, meta);

  if (!o.log_path.empty()) {
    std::ofstream lout(o.log_path);
    if (!lout) throw IoError("cannot write " + o.log_path);
    lout << "epoch,l1_bpm,smooth_bpm,total\n";
    for (const EpochStats& e : log.epochs)
      lout << e.epoch << "," << format_double(e.l1_bpm) << "," << format_double(e.smooth_bpm)
           << "," << format_double(e.total) << "\n";
    if (!lout) throw IoError("short write: " + o.log_path);
  }

  const EpochStats& last = log.epochs.back();
  std::cout << "trained " << config.variant << (config.use_gru ? "+gru" : "") << " on "
            << dataset.size() << " map(s), " << log.epochs.size()
            << " epoch(s); final l1 " << format_double(last.l1_bpm) << " bpm; wrote " << o.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferOpts {
  std::string model_path;
  std::string input;
  std::string out;
  double step = 0.5;
  std::string schema_path;
  int jobs = 1;
};

int run_infer(const InferOpts& o) {
  std::unique_ptr<FloatModel> model = load_model(o.model_path);
  std::vector<HrRow> rows;

  if (is_video_input(o.input)) {
    const LandmarkSchema schema = load_schema_opt(o.schema_path);
    for (const fs::path& vdir : find_video_dirs(o.input)) {
      const FrameSequence seq = load_frame_sequence(vdir.string());
      const LandmarkTrack lms = load_landmarks((vdir / "landmarks.csv").string(), seq.size());
      const HrEstimate est = predict_video(*model, seq, lms, schema, o.step, o.jobs);
      HrRow row;
      row.scope = "video";
      row.subject_id = seq.subject_id;
      row.video_id = seq.video_id;
      row.clip_start = 0;
      row.clip_length = seq.size();
      row.hr_bpm = est.hr_bpm;
      row.status = "ok";
      rows.push_back(row);
    }
  } else {
    const std::vector<fs::path> files = find_stm_files(o.input);
    if (files.empty()) throw IoError("no video layout or .stm files under " + o.input);
    std::vector<SpatialTemporalMap> maps;
    maps.reserve(files.size());
    for (const fs::path& file : files) maps.push_back(load_stmap(file.string()));
    const std::vector<double> preds = predict_maps(*model, maps);

    std::map<std::string, std::vector<double>> video_hrs;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      HrRow row;
      row.scope = "clip";
      row.subject_id = maps[i].subject_id;
      row.video_id = maps[i].video_id;
      row.clip_start = maps[i].clip.start_frame;
      row.clip_length = maps[i].t_frames;
      row.hr_bpm = preds[i];
      row.status = "ok";
      rows.push_back(row);
      video_hrs[maps[i].subject_id + "/" + maps[i].video_id].push_back(preds[i]);
    }
    for (const auto& [key, hrs] : video_hrs) {
      const std::size_t slash = key.find('/');
      append_video_mean(rows, key.substr(0, slash), key.substr(slash + 1), 0, hrs);
    }
  }

  write_hr_csv(rows, o.out);
  std::cout << "wrote " << rows.size() << " row(s) to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOpts {
  std::string pairs_path;
  std::string dataset;
  std::string methods = "green,chrom,pos";
  std::string model_path;
  std::string out_prefix;
  std::string schema_path;
  int window = 300;
  double step = 0.5;
  std::string grid = "5x5";
  int folds = 0;
  std::uint64_t seed = 0;
  int jobs = 1;
};

std::vector<HrPair> load_pairs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file: " + path);
  std::vector<HrPair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string est_s, gt_s;
    if (!std::getline(ss, est_s, ',') || !std::getline(ss, gt_s, ','))
      throw ValidationError(path + ":" + std::to_string(line_no) + ": need est_bpm,gt_bpm");
    try {
      std::size_t a = 0, b = 0;
      const double est = std::stod(est_s, &a);
      const double gt = std::stod(gt_s, &b);
      if (a != est_s.size() || b != gt_s.size()) throw std::invalid_argument("trailing");
      pairs.push_back({est, gt});
    } catch (const std::exception&) {
      if (line_no == 1) continue;  // header row
      throw ValidationError(path + ":" + std::to_string(line_no) + ": bad number");
    }
  }
  return pairs;
}

std::vector<std::string> split_comma(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int run_evaluate(const EvaluateOpts& o) {
  if (o.pairs_path.empty() == o.dataset.empty())
    throw ValidationError("evaluate needs exactly one of --pairs or --dataset");

  std::vector<std::pair<std::string, std::vector<HrPair>>> labeled_pairs;

  if (!o.pairs_path.empty()) {
    labeled_pairs.push_back({"pairs", load_pairs_csv(o.pairs_path)});
  } else {
    const auto [grid_rows, grid_cols] = parse_grid(o.grid);
    const LandmarkSchema schema = load_schema_opt(o.schema_path);
    const std::vector<std::string> methods = split_comma(o.methods);
    std::unique_ptr<FloatModel> model;
    if (!o.model_path.empty()) model = load_model(o.model_path);

    for (const std::string& method : methods) labeled_pairs.push_back({method, {}});
    if (model) labeled_pairs.push_back({"model", {}});

    std::vector<std::string> subjects;
    for (const fs::path& vdir : find_video_dirs(o.dataset)) {
      const FrameSequence seq = load_frame_sequence(vdir.string());
      const LandmarkTrack lms = load_landmarks((vdir / "landmarks.csv").string(), seq.size());
      const GroundTruthTrace gt = load_ground_truth((vdir / "gt.csv").string());
      if (gt.hr_samples.empty())
        throw ValidationError("video has no HR ground truth: " + vdir.string());
      double gt_sum = 0.0;
      for (const auto& [t, hr] : gt.hr_samples) gt_sum += hr;
      const double gt_hr = gt_sum / static_cast<double>(gt.hr_samples.size());
      if (subjects.empty() || subjects.back() != seq.subject_id)
        subjects.push_back(seq.subject_id);

      const std::vector<ClipWindow> windows =
          slide_windows(seq.size(), seq.nominal_fps, o.window, o.step);
      std::vector<BlockTraces> traces(windows.size());
      parallel_for(static_cast<int>(windows.size()), o.jobs, [&](int i) {
        traces[static_cast<std::size_t>(i)] = extract_block_traces(
            seq, lms, windows[static_cast<std::size_t>(i)], grid_rows, grid_cols, schema);
      });

      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        std::vector<double> hrs;
        for (const BlockTraces& tr : traces) {
          try {
            hrs.push_back(estimate_trace(methods[mi], tr).hr_bpm);
          } catch (const NoPeakError&) {
          }
        }
        if (hrs.empty()) continue;  // video unusable for this method
        double sum = 0.0;
        for (double hr : hrs) sum += hr;
        labeled_pairs[mi].second.push_back({sum / static_cast<double>(hrs.size()), gt_hr});
      }
      if (model) {
        const HrEstimate est = predict_video(*model, seq, lms, schema, o.step, o.jobs);
        labeled_pairs.back().second.push_back({est.hr_bpm, gt_hr});
      }
    }

    if (o.folds > 0) {
      std::sort(subjects.begin(), subjects.end());
      subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
      const FoldPlan plan = make_folds(subjects, o.folds, o.seed);
      std::ofstream fout(o.out_prefix + "_folds.csv");
      if (!fout) throw IoError("cannot write " + o.out_prefix + "_folds.csv");
      fout << "subject_id,fold\n";
      for (std::size_t f = 0; f < plan.folds.size(); ++f)
        for (const std::string& s : plan.folds[f]) fout << s << "," << f << "\n";
    }
  }

  std::vector<std::pair<std::string, Metrics>> metric_rows;
  for (const auto& [label, pairs] : labeled_pairs) {
    if (pairs.empty())
      throw ValidationError("no usable estimate/label pairs for " + label);
    metric_rows.push_back({label, compute_metrics(pairs)});
    if (pairs.size() >= 2)
      write_bland_altman_csv(bland_altman(pairs), o.out_prefix + "_ba_" + label + ".csv");
  }
  write_metrics_csv(metric_rows, o.out_prefix + "_metrics.csv");
  write_metrics_json(metric_rows, o.out_prefix + "_metrics.json");
  std::cout << "wrote metrics for " << metric_rows.size() << " estimator(s) to " << o.out_prefix
            << "_metrics.{csv,json}\n";
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthCommonOpts {
  std::string spec_path;
  double hr = 72.0;
  double fps = 30.0;
  double duration = 10.0;
  double amplitude = 0.02;
  double harmonic = 0.3;
  double drift_freq = 0.0;
  double drift_amp = 0.0;
  double motion_sigma = 0.0;
  double sensor_sigma = 0.0;
  std::uint64_t seed = 0;
};

SynthSpec make_spec(const SynthCommonOpts& o) {
  if (!o.spec_path.empty()) {
    SynthSpec spec = load_synth_spec(o.spec_path);
    spec.validate();
    return spec;
  }
  SynthSpec spec;
  spec.hr_knots = {{0.0, o.hr}};
  spec.fps = o.fps;
  spec.duration_s = o.duration;
  spec.amplitude = o.amplitude;
  spec.harmonic_ratio = o.harmonic;
  spec.drift_freq_hz = o.drift_freq;
  spec.drift_amp = o.drift_amp;
  spec.motion_sigma = o.motion_sigma;
  spec.sensor_sigma = o.sensor_sigma;
  spec.seed = o.seed;
  spec.validate();
  return spec;
}

int run_synth_video(const SynthCommonOpts& common, const std::string& out, int height,
                    int width) {
  const SynthSpec spec = make_spec(common);
  const SynthVideo video = gen_synthetic_frames(spec, height, width);
  fs::create_directories(out);
  write_frame_sequence(video.sequence, out);
  write_landmarks(video.landmarks, (fs::path(out) / "landmarks.csv").string());
  write_ground_truth(video.ground_truth, (fs::path(out) / "gt.csv").string());
  std::cout << "wrote " << video.sequence.size() << " frame(s) at "
            << format_double(spec.fps) << " fps to " << out << "\n";
  return 0;
}

int run_synth_maps(const SynthCommonOpts& common, const std::string& out, int n_videos,
                   int clips_per_video, double hr_min, double hr_max, int window, double step,
                   const std::string& grid, const std::string& colorspace) {
  if (n_videos < 1 || clips_per_video < 1)
    throw ValidationError("--videos and --clips must be >= 1");
  if (!(hr_min >= 42.0 && hr_max <= 150.0 && hr_min <= hr_max))
    throw ValidationError("hr range must satisfy 42 <= min <= max <= 150");
  const auto [rows, cols] = parse_grid(grid);
  const ColorSpace cs = parse_colorspace(colorspace);
  const int step_frames = static_cast<int>(std::lround(step * common.fps));
  if (step_frames < 1) throw ValidationError("step rounds to zero frames");
  fs::create_directories(out);

  long long written = 0;
  for (int v = 0; v < n_videos; ++v) {
    Rng hr_rng(mix_seed(common.seed, 0xA1, static_cast<std::uint64_t>(v)));
    const double hr = hr_min + (hr_max - hr_min) * hr_rng.uniform();
    for (int k = 0; k < clips_per_video; ++k) {
      SynthCommonOpts per_clip = common;
      per_clip.spec_path.clear();
      per_clip.hr = hr;
      per_clip.duration = static_cast<double>(window) / common.fps;
      per_clip.seed = mix_seed(common.seed, static_cast<std::uint64_t>(v) + 1,
                               static_cast<std::uint64_t>(k) + 1);
      const SynthSpec spec = make_spec(per_clip);
      SpatialTemporalMap map = gen_synthetic_stmap(spec, rows * cols, 3, cs);

      std::ostringstream id;
      id << std::setw(3) << std::setfill('0') << v;
      map.subject_id = "s" + id.str();
      map.video_id = "v" + id.str();
      map.clip.start_frame = k * step_frames;
      map.clip.length = window;
      map.clip.step_frames = step_frames;
      write_stmap(map, (fs::path(out) / clip_file_name(map)).string());
      ++written;
    }
  }
  std::cout << "wrote " << written << " map(s) for " << n_videos << " video(s) to " << out
            << "\n";
  return 0;
}

int run_synth_trace(const SynthCommonOpts& common, const std::string& out) {
  const SynthSpec spec = make_spec(common);
  const PulseSignal trace = gen_pulse_trace(spec);
  std::ofstream fout(out);
  if (!fout) throw IoError("cannot write " + out);
  fout << "# fps=" << format_double(trace.fps) << "\n";
  fout << "sample_index,value\n";
  for (std::size_t i = 0; i < trace.samples.size(); ++i)
    fout << i << "," << format_double(trace.samples[i]) << "\n";
  if (!fout) throw IoError("short write: " + out);
  std::cout << "wrote " << trace.samples.size() << " sample(s) to " << out << "\n";
  return 0;
}

void add_synth_common(CLI::App* cmd, SynthCommonOpts& o) {
  cmd->add_option("--spec", o.spec_path, "Spec config file (overrides the flags below)");
  cmd->add_option("--hr", o.hr, "Heart rate in bpm")->capture_default_str();
  cmd->add_option("--fps", o.fps, "Frame rate")->capture_default_str();
  cmd->add_option("--duration", o.duration, "Duration in seconds")->capture_default_str();
  cmd->add_option("--amplitude", o.amplitude, "Pulse modulation depth")->capture_default_str();
  cmd->add_option("--harmonic", o.harmonic, "2nd harmonic ratio")->capture_default_str();
  cmd->add_option("--drift-freq", o.drift_freq, "Illumination drift frequency (Hz)")
      ->capture_default_str();
  cmd->add_option("--drift-amp", o.drift_amp, "Illumination drift amplitude")
      ->capture_default_str();
  cmd->add_option("--motion-sigma", o.motion_sigma, "Per-block motion noise sigma")
      ->capture_default_str();
  cmd->add_option("--sensor-sigma", o.sensor_sigma, "Per-sample sensor noise sigma")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rhythmkit: remote heart-rate estimation from face video"};
  app.require_subcommand(1);

  // --- extract ---
  ExtractOpts ex;
  CLI::App* extract = app.add_subcommand("extract", "Build spatial-temporal maps from videos");
  extract->add_option("input", ex.input, "Video directory (or tree of them)")->required();
  extract->add_option("-o,--out", ex.out, "Output directory for .stm files")->required();
  extract->add_option("--window", ex.window, "Clip window length in frames")
      ->capture_default_str();
  extract->add_option("--step", ex.step, "Window step in seconds")->capture_default_str();
  extract->add_option("--grid", ex.grid, "ROI grid rows x cols")->capture_default_str();
  extract->add_option("--colorspace", ex.colorspace, "Map color space: yuv or rgb")
      ->capture_default_str();
  extract->add_option("--schema", ex.schema_path, "Landmark schema file");
  extract->add_option("--smooth-landmarks", ex.smooth_window,
                      "Odd moving-average window over landmarks (0 = off)")
      ->capture_default_str();
  extract->add_option("-j,--jobs", ex.jobs, "Worker threads")->capture_default_str();

  // --- estimate ---
  EstimateOpts es;
  CLI::App* estimate = app.add_subcommand("estimate", "Classical HR estimation");
  estimate->add_option("input", es.input, "Video directory tree or .stm directory")->required();
  estimate->add_option("-o,--out", es.out, "Output CSV")->required();
  estimate->add_option("-m,--method", es.method, "green, chrom or pos")->capture_default_str();
  estimate->add_option("--window", es.window, "Clip window length in frames")
      ->capture_default_str();
  estimate->add_option("--step", es.step, "Window step in seconds")->capture_default_str();
  estimate->add_option("--grid", es.grid, "ROI grid rows x cols")->capture_default_str();
  estimate->add_option("--schema", es.schema_path, "Landmark schema file");
  estimate->add_option("-j,--jobs", es.jobs, "Worker threads")->capture_default_str();

  // --- train ---
  TrainOpts tr;
  CLI::App* train = app.add_subcommand("train", "Train the HR regression model");
  train->add_option("data", tr.data, "Directory of labeled .stm files")->required();
  train->add_option("-o,--out", tr.out, "Output checkpoint path")->required();
  CLI::Option* train_config_opt = train->add_option(
      "--config", tr.config_path,
      "Training config file (key=value lines; takes precedence over the flags below, "
      "except --seed and --jobs)");
  train->add_option("--variant", tr.config.variant, "Backbone: compact or resnet18-style")
      ->capture_default_str();
  train->add_flag("--gru", tr.config.use_gru, "Use the recurrent head");
  train->add_option("--epochs", tr.config.epochs, "Training epochs (max 50)")
      ->capture_default_str();
  train->add_option("--lr", tr.config.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--lambda", tr.config.lambda, "Smooth-loss weight")->capture_default_str();
  train->add_option("--batch-units", tr.config.batch_units, "Smooth-loss units per step")
      ->capture_default_str();
  train->add_option("--mask-prob", tr.config.mask_prob, "Masking probability")
      ->capture_default_str();
  train->add_option("--mask-min", tr.config.mask_min_len, "Minimum mask length (frames)")
      ->capture_default_str();
  train->add_option("--mask-max", tr.config.mask_max_len, "Maximum mask length (frames)")
      ->capture_default_str();
  train->add_option("--smooth-group", tr.config.smooth_group, "Adjacent clips per smooth unit")
      ->capture_default_str();
  train->add_option("--fps-train", tr.config.fps_train, "Reference training frame rate")
      ->capture_default_str();
  train->add_option("--grid", tr.grid, "ROI grid rows x cols (recorded in the checkpoint)")
      ->capture_default_str();
  CLI::Option* train_seed_opt =
      train->add_option("--seed", tr.config.seed, "Random seed")->capture_default_str();
  train->add_option("-j,--jobs", tr.config.jobs, "Worker threads")->capture_default_str();
  train->add_option("--log", tr.log_path, "Also write a per-epoch loss CSV");

  // --- infer ---
  InferOpts in_;
  CLI::App* infer = app.add_subcommand("infer", "Model inference");
  infer->add_option("input", in_.input, "Video directory tree or .stm directory")->required();
  infer->add_option("-o,--out", in_.out, "Output CSV")->required();
  infer->add_option("--model", in_.model_path, "Checkpoint path")->required();
  infer->add_option("--step", in_.step, "Window step in seconds")->capture_default_str();
  infer->add_option("--schema", in_.schema_path, "Landmark schema file");
  infer->add_option("-j,--jobs", in_.jobs, "Worker threads")->capture_default_str();

  // --- evaluate ---
  EvaluateOpts ev;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Metrics over estimates");
  evaluate->add_option("--pairs", ev.pairs_path, "CSV of est_bpm,gt_bpm rows");
  evaluate->add_option("--dataset", ev.dataset, "Labeled video directory tree");
  evaluate->add_option("--methods", ev.methods, "Comma list of classical methods")
      ->capture_default_str();
  evaluate->add_option("--model", ev.model_path, "Also evaluate this checkpoint");
  evaluate->add_option("-o,--out-prefix", ev.out_prefix, "Output path prefix")->required();
  evaluate->add_option("--window", ev.window, "Clip window length in frames")
      ->capture_default_str();
  evaluate->add_option("--step", ev.step, "Window step in seconds")->capture_default_str();
  evaluate->add_option("--grid", ev.grid, "ROI grid rows x cols")->capture_default_str();
  evaluate->add_option("--schema", ev.schema_path, "Landmark schema file");
  evaluate->add_option("--folds", ev.folds, "Also write a subject-exclusive fold plan")
      ->capture_default_str();
  CLI::Option* eval_seed_opt =
      evaluate->add_option("--seed", ev.seed, "Random seed")->capture_default_str();
  evaluate->add_option("-j,--jobs", ev.jobs, "Worker threads")->capture_default_str();

  // --- synth ---
  CLI::App* synth = app.add_subcommand("synth", "Synthetic data with known ground truth");
  synth->require_subcommand(1);

  SynthCommonOpts sv_common;
  std::string sv_out;
  int sv_height = 64, sv_width = 64;
  CLI::App* synth_video = synth->add_subcommand("video", "Full video layout");
  add_synth_common(synth_video, sv_common);
  synth_video->add_option("-o,--out", sv_out, "Output video directory")->required();
  synth_video->add_option("--height", sv_height, "Frame height")->capture_default_str();
  synth_video->add_option("--width", sv_width, "Frame width")->capture_default_str();
  CLI::Option* sv_seed_opt =
      synth_video->add_option("--seed", sv_common.seed, "Random seed")->capture_default_str();

  SynthCommonOpts sm_common;
  std::string sm_out, sm_grid = "5x5", sm_colorspace = "yuv";
  int sm_videos = 10, sm_clips = 8, sm_window = 300;
  double sm_step = 0.5, sm_hr_min = 50.0, sm_hr_max = 140.0;
  CLI::App* synth_maps = synth->add_subcommand("maps", "Labeled .stm training dataset");
  add_synth_common(synth_maps, sm_common);
  synth_maps->add_option("-o,--out", sm_out, "Output directory")->required();
  synth_maps->add_option("--videos", sm_videos, "Number of synthetic videos")
      ->capture_default_str();
  synth_maps->add_option("--clips", sm_clips, "Clips per video")->capture_default_str();
  synth_maps->add_option("--hr-min", sm_hr_min, "Lowest video HR")->capture_default_str();
  synth_maps->add_option("--hr-max", sm_hr_max, "Highest video HR")->capture_default_str();
  synth_maps->add_option("--window", sm_window, "Clip window length in frames")
      ->capture_default_str();
  synth_maps->add_option("--step", sm_step, "Window step in seconds")->capture_default_str();
  synth_maps->add_option("--grid", sm_grid, "ROI grid rows x cols")->capture_default_str();
  synth_maps->add_option("--colorspace", sm_colorspace, "Map color space: yuv or rgb")
      ->capture_default_str();
  CLI::Option* sm_seed_opt =
      synth_maps->add_option("--seed", sm_common.seed, "Random seed")->capture_default_str();

  SynthCommonOpts st_common;
  std::string st_out;
  CLI::App* synth_trace = synth->add_subcommand("trace", "Scalar pulse trace CSV");
  add_synth_common(synth_trace, st_common);
  synth_trace->add_option("-o,--out", st_out, "Output CSV")->required();
  CLI::Option* st_seed_opt =
      synth_trace->add_option("--seed", st_common.seed, "Random seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) return run_extract(ex);
    if (*estimate) return run_estimate(es);
    if (*train) {
      if (train_config_opt->count() > 0) {
        TrainConfig from_file = load_train_config(tr.config_path);
        if (train_seed_opt->count() > 0) from_file.seed = tr.config.seed;
        from_file.jobs = tr.config.jobs;
        tr.config = from_file;
      } else if (train_seed_opt->count() == 0) {
        tr.config.seed = env_seed_or(tr.config.seed);
      }
      return run_train(tr);
    }
    if (*infer) return run_infer(in_);
    if (*evaluate) {
      if (eval_seed_opt->count() == 0) ev.seed = env_seed_or(ev.seed);
      return run_evaluate(ev);
    }
    if (*synth_video) {
      if (sv_seed_opt->count() == 0) sv_common.seed = env_seed_or(sv_common.seed);
      return run_synth_video(sv_common, sv_out, sv_height, sv_width);
    }
    if (*synth_maps) {
      if (sm_seed_opt->count() == 0) sm_common.seed = env_seed_or(sm_common.seed);
      return run_synth_maps(sm_common, sm_out, sm_videos, sm_clips, sm_hr_min, sm_hr_max,
                            sm_window, sm_step, sm_grid, sm_colorspace);
    }
    if (*synth_trace) {
      if (st_seed_opt->count() == 0) st_common.seed = env_seed_or(st_common.seed);
      return run_synth_trace(st_common, st_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
