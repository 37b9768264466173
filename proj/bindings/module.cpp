// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the RhythmKit core.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rhythmkit/dsp.hpp"
#include "rhythmkit/estimators.hpp"
#include "rhythmkit/evaluation.hpp"
#include "rhythmkit/face_geometry.hpp"
#include "rhythmkit/ingest.hpp"
#include "rhythmkit/model.hpp"
#include "rhythmkit/rng.hpp"
#include "rhythmkit/stmap.hpp"
#include "rhythmkit/synth.hpp"
#include "rhythmkit/types.hpp"

namespace py = pybind11;
using namespace rhythmkit;

namespace {

std::string colorspace_str(ColorSpace cs) { return colorspace_name(cs); }

}  // namespace

PYBIND11_MODULE(_rhythmkit, m) {
  m.doc() = "Remote heart-rate estimation from face video (core bindings)";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<NoPeakError>(m, "NoPeakError", PyExc_RuntimeError);

  // --- core types ---

  py::class_<Vec2>(m, "Vec2")
      .def(py::init<>())
      .def_readwrite("x", &Vec2::x)
      .def_readwrite("y", &Vec2::y);

  py::class_<ClipWindow>(m, "ClipWindow")
      .def(py::init<>())
      .def_readwrite("start_frame", &ClipWindow::start_frame)
      .def_readwrite("length", &ClipWindow::length)
      .def_readwrite("step_frames", &ClipWindow::step_frames)
      .def_readwrite("gt_hr_bpm", &ClipWindow::gt_hr_bpm);

  py::class_<PulseSignal>(m, "PulseSignal")
      .def(py::init<>())
      .def_readwrite("samples", &PulseSignal::samples)
      .def_readwrite("fps", &PulseSignal::fps);

  py::class_<HrEstimate>(m, "HrEstimate")
      .def_readonly("hr_bpm", &HrEstimate::hr_bpm)
      .def_readonly("snr_db", &HrEstimate::snr_db)
      .def_readonly("clip", &HrEstimate::clip);

  py::class_<FrameSequence>(m, "FrameSequence")
      .def_readonly("timestamps_ms", &FrameSequence::timestamps_ms)
      .def_readonly("nominal_fps", &FrameSequence::nominal_fps)
      .def_readonly("subject_id", &FrameSequence::subject_id)
      .def_readonly("video_id", &FrameSequence::video_id)
      .def("size", &FrameSequence::size)
      .def("duration_s", &FrameSequence::duration_s);

  py::class_<LandmarkTrack>(m, "LandmarkTrack")
      .def_readonly("valid", &LandmarkTrack::valid)
      .def("size", &LandmarkTrack::size);

  py::class_<GroundTruthTrace>(m, "GroundTruthTrace")
      .def_readonly("hr_samples", &GroundTruthTrace::hr_samples)
      .def_readonly("bvp_samples", &GroundTruthTrace::bvp_samples)
      .def("empty", &GroundTruthTrace::empty);

  py::class_<LandmarkSchema>(m, "LandmarkSchema")
      .def_static("default_schema", &LandmarkSchema::default_schema);

  py::class_<BlockTraces>(m, "BlockTraces")
      .def(py::init<>())
      .def_readwrite("t_frames", &BlockTraces::t_frames)
      .def_readwrite("n_blocks", &BlockTraces::n_blocks)
      .def_readwrite("channels", &BlockTraces::channels)
      .def_readwrite("fps", &BlockTraces::fps)
      .def_readwrite("data", &BlockTraces::data);

  py::class_<SpatialTemporalMap>(m, "SpatialTemporalMap")
      .def(py::init<>())
      .def_readwrite("t_frames", &SpatialTemporalMap::t_frames)
      .def_readwrite("n_blocks", &SpatialTemporalMap::n_blocks)
      .def_readwrite("channels", &SpatialTemporalMap::channels)
      .def_readwrite("fps", &SpatialTemporalMap::fps)
      .def_readwrite("clip", &SpatialTemporalMap::clip)
      .def_readwrite("subject_id", &SpatialTemporalMap::subject_id)
      .def_readwrite("video_id", &SpatialTemporalMap::video_id)
      .def_readwrite("data", &SpatialTemporalMap::data)
      .def_property(
          "colorspace",
          [](const SpatialTemporalMap& map) { return colorspace_str(map.colorspace); },
          [](SpatialTemporalMap& map, const std::string& name) {
            map.colorspace = parse_colorspace(name);
          });

  // --- metrics ---

  py::class_<Metrics>(m, "Metrics")
      .def_readonly("mean_err_bpm", &Metrics::mean_err_bpm)
      .def_readonly("std_err_bpm", &Metrics::std_err_bpm)
      .def_readonly("mae_bpm", &Metrics::mae_bpm)
      .def_readonly("rmse_bpm", &Metrics::rmse_bpm)
      .def_readonly("mer_percent", &Metrics::mer_percent)
      .def_readonly("pearson_r", &Metrics::pearson_r)
      .def_readonly("pearson_degenerate", &Metrics::pearson_degenerate)
      .def_readonly("n", &Metrics::n);

  py::class_<BlandAltman>(m, "BlandAltman")
      .def_readonly("points", &BlandAltman::points)
      .def_readonly("mean_diff", &BlandAltman::mean_diff)
      .def_readonly("std_diff", &BlandAltman::std_diff)
      .def_readonly("lower_limit", &BlandAltman::lower_limit)
      .def_readonly("upper_limit", &BlandAltman::upper_limit);

  py::class_<FoldPlan>(m, "FoldPlan").def_readonly("folds", &FoldPlan::folds);

  // --- synthesis ---

  py::class_<SynthSpec>(m, "SynthSpec")
      .def(py::init<>())
      .def_static("constant_hr", &SynthSpec::constant_hr, py::arg("hr_bpm"))
      .def_readwrite("hr_knots", &SynthSpec::hr_knots)
      .def_readwrite("fps", &SynthSpec::fps)
      .def_readwrite("duration_s", &SynthSpec::duration_s)
      .def_readwrite("amplitude", &SynthSpec::amplitude)
      .def_readwrite("harmonic_ratio", &SynthSpec::harmonic_ratio)
      .def_readwrite("drift_freq_hz", &SynthSpec::drift_freq_hz)
      .def_readwrite("drift_amp", &SynthSpec::drift_amp)
      .def_readwrite("motion_sigma", &SynthSpec::motion_sigma)
      .def_readwrite("sensor_sigma", &SynthSpec::sensor_sigma)
      .def_readwrite("seed", &SynthSpec::seed)
      .def("validate", &SynthSpec::validate)
      .def("hr_at", &SynthSpec::hr_at, py::arg("t_s"))
      .def("mean_hr", &SynthSpec::mean_hr, py::arg("t0_s"), py::arg("t1_s"));

  py::class_<SynthVideo>(m, "SynthVideo")
      .def_readonly("sequence", &SynthVideo::sequence)
      .def_readonly("landmarks", &SynthVideo::landmarks)
      .def_readonly("ground_truth", &SynthVideo::ground_truth);

  // --- model ---

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("variant", &TrainConfig::variant)
      .def_readwrite("use_gru", &TrainConfig::use_gru)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("lambda_", &TrainConfig::lambda)
      .def_readwrite("batch_units", &TrainConfig::batch_units)
      .def_readwrite("mask_prob", &TrainConfig::mask_prob)
      .def_readwrite("mask_min_len", &TrainConfig::mask_min_len)
      .def_readwrite("mask_max_len", &TrainConfig::mask_max_len)
      .def_readwrite("smooth_group", &TrainConfig::smooth_group)
      .def_readwrite("fps_train", &TrainConfig::fps_train)
      .def_readwrite("grid_rows", &TrainConfig::grid_rows)
      .def_readwrite("grid_cols", &TrainConfig::grid_cols)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("jobs", &TrainConfig::jobs)
      .def_property(
          "colorspace",
          [](const TrainConfig& c) { return colorspace_str(c.colorspace); },
          [](TrainConfig& c, const std::string& name) { c.colorspace = parse_colorspace(name); })
      .def("validate", &TrainConfig::validate);

  py::class_<EpochStats>(m, "EpochStats")
      .def_readonly("epoch", &EpochStats::epoch)
      .def_readonly("l1_bpm", &EpochStats::l1_bpm)
      .def_readonly("smooth_bpm", &EpochStats::smooth_bpm)
      .def_readonly("total", &EpochStats::total);

  py::class_<TrainLog>(m, "TrainLog").def_readonly("epochs", &TrainLog::epochs);

  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def_readonly("l1", &LossBreakdown::l1)
      .def_readonly("smooth", &LossBreakdown::smooth)
      .def_readonly("total", &LossBreakdown::total)
      .def_readonly("lambda_", &LossBreakdown::lambda);

  py::class_<FloatModel>(m, "Model")
      .def_property_readonly("target_mean",
                             [](const FloatModel& model) { return model.target_mean; })
      .def_property_readonly("target_std",
                             [](const FloatModel& model) { return model.target_std; })
      .def_property_readonly("fps_train",
                             [](const FloatModel& model) { return model.fps_train; })
      .def_property_readonly("grid_rows", [](const FloatModel& model) { return model.grid_rows; })
      .def_property_readonly("grid_cols", [](const FloatModel& model) { return model.grid_cols; })
      .def_property_readonly("use_gru", [](const FloatModel& model) { return model.use_gru(); })
      .def_property_readonly(
          "colorspace", [](const FloatModel& model) { return colorspace_str(model.colorspace); });

  // --- randomness ---

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("uniform", py::overload_cast<>(&Rng::uniform))
      .def("uniform_range", py::overload_cast<double, double>(&Rng::uniform), py::arg("lo"),
           py::arg("hi"))
      .def("uniform_int", &Rng::uniform_int, py::arg("lo"), py::arg("hi"))
      .def("gauss", &Rng::gauss)
      .def("fork", &Rng::fork, py::arg("salt"));

  m.def("mix_seed", &mix_seed, py::arg("a"), py::arg("b") = 0, py::arg("c") = 0);

  // --- ingest ---

  m.def("load_frame_sequence", &load_frame_sequence, py::arg("video_dir"));
  m.def("write_frame_sequence", &write_frame_sequence, py::arg("sequence"),
        py::arg("video_dir"));
  m.def("load_landmarks", &load_landmarks, py::arg("path"), py::arg("n_frames"));
  m.def("write_landmarks", &write_landmarks, py::arg("track"), py::arg("path"));
  m.def("load_ground_truth", &load_ground_truth, py::arg("path"));
  m.def("write_ground_truth", &write_ground_truth, py::arg("trace"), py::arg("path"));
  m.def("resample_sequence", &resample_sequence, py::arg("sequence"), py::arg("target_fps"));
  m.def("smooth_landmarks", &smooth_landmarks, py::arg("track"), py::arg("window"));
  m.def("load_landmark_schema", &load_landmark_schema, py::arg("path"));

  // --- maps ---

  m.def("slide_windows", &slide_windows, py::arg("seq_len"), py::arg("fps"),
        py::arg("win_frames"), py::arg("step_seconds"));
  m.def(
      "label_windows",
      [](std::vector<ClipWindow> windows, const std::vector<std::int64_t>& timestamps,
         const GroundTruthTrace& trace) {
        label_windows(windows, timestamps, trace);
        return windows;
      },
      py::arg("windows"), py::arg("timestamps_ms"), py::arg("trace"));
  m.def("extract_block_traces", &extract_block_traces, py::arg("sequence"),
        py::arg("landmarks"), py::arg("clip"), py::arg("rows"), py::arg("cols"),
        py::arg("schema"));
  m.def(
      "build_stmap",
      [](const FrameSequence& seq, const LandmarkTrack& lms, const ClipWindow& clip, int rows,
         int cols, const std::string& colorspace, const LandmarkSchema& schema) {
        return build_stmap(seq, lms, clip, rows, cols, parse_colorspace(colorspace), schema);
      },
      py::arg("sequence"), py::arg("landmarks"), py::arg("clip"), py::arg("rows"),
      py::arg("cols"), py::arg("colorspace"), py::arg("schema"));
  m.def(
      "normalize_traces",
      [](const BlockTraces& traces, const std::string& colorspace) {
        return normalize_traces(traces, parse_colorspace(colorspace));
      },
      py::arg("traces"), py::arg("colorspace"));
  m.def("mask_augment", &mask_augment, py::arg("map"), py::arg("rng_seed"),
        py::arg("min_len") = 10, py::arg("max_len") = 30, py::arg("prob") = 0.5);
  m.def("minmax_normalize_row", &minmax_normalize_row, py::arg("row"));
  m.def("rgb_to_yuv", &rgb_to_yuv, py::arg("rgb"));
  m.def("write_stmap", &write_stmap, py::arg("map"), py::arg("path"));
  m.def("load_stmap", &load_stmap, py::arg("path"));

  // --- signal processing ---

  m.def("detrend", &detrend, py::arg("signal"), py::arg("lambda_"));
  m.def("detrend_lambda_for_fps", &detrend_lambda_for_fps, py::arg("fps"));
  m.def("bandpass", &bandpass, py::arg("signal"), py::arg("lo_hz") = kBandLoHz,
        py::arg("hi_hz") = kBandHiHz);
  m.def("spectral_peak_hr", &spectral_peak_hr, py::arg("signal"), py::arg("lo_hz") = kBandLoHz,
        py::arg("hi_hz") = kBandHiHz);

  // --- classical estimators ---

  m.def("estimate_green", &estimate_green, py::arg("traces"));
  m.def("estimate_chrom", &estimate_chrom, py::arg("traces"));
  m.def("estimate_pos", &estimate_pos, py::arg("traces"));
  m.def("estimate_trace", &estimate_trace, py::arg("method"), py::arg("traces"));
  m.def("spatial_average_trace", &spatial_average_trace, py::arg("traces"), py::arg("channel"));

  // --- synthesis ---

  m.def("load_synth_spec", &load_synth_spec, py::arg("path"));
  m.def("write_synth_spec", &write_synth_spec, py::arg("spec"), py::arg("path"));
  m.def("gen_pulse_trace", &gen_pulse_trace, py::arg("spec"));
  m.def("gen_synthetic_traces", &gen_synthetic_traces, py::arg("spec"), py::arg("n_blocks"),
        py::arg("channels"));
  m.def(
      "gen_synthetic_stmap",
      [](const SynthSpec& spec, int n_blocks, int channels, const std::string& colorspace) {
        return gen_synthetic_stmap(spec, n_blocks, channels, parse_colorspace(colorspace));
      },
      py::arg("spec"), py::arg("n_blocks"), py::arg("channels"),
      py::arg("colorspace") = "yuv");
  m.def("gen_synthetic_frames", &gen_synthetic_frames, py::arg("spec"), py::arg("height"),
        py::arg("width"));

  // --- losses and model ---

  m.def("smooth_loss", &smooth_loss, py::arg("hr_estimates"));
  m.def("smooth_loss_grad", &smooth_loss_grad, py::arg("hr_estimates"));
  m.def("total_loss", &total_loss, py::arg("predictions"), py::arg("labels"),
        py::arg("lambda_") = 100.0);
  m.def("load_train_config", &load_train_config, py::arg("path"));
  m.def("write_train_config", &write_train_config, py::arg("config"), py::arg("path"));
  m.def(
      "train_model",
      [](const std::vector<SpatialTemporalMap>& dataset, const TrainConfig& config) {
        TrainLog log;
        std::unique_ptr<FloatModel> model = train_model(dataset, config, &log);
        return py::make_tuple(std::move(model), log);
      },
      py::arg("dataset"), py::arg("config"));
  m.def("predict_maps", &predict_maps, py::arg("model"), py::arg("maps"));
  m.def("predict_video", &predict_video, py::arg("model"), py::arg("sequence"),
        py::arg("landmarks"), py::arg("schema"), py::arg("step_seconds") = 0.5,
        py::arg("jobs") = 1);
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"),
        py::arg("extra_meta") = std::map<std::string, std::string>{});
  m.def("load_model", &load_model, py::arg("path"));

  // --- evaluation ---

  m.def("compute_metrics", &compute_metrics, py::arg("pairs"));
  m.def("make_folds", &make_folds, py::arg("subject_ids"), py::arg("k"), py::arg("seed"));
  m.def("bland_altman", &bland_altman, py::arg("pairs"));
  m.def("write_bland_altman_csv", &write_bland_altman_csv, py::arg("ba"), py::arg("path"));
  m.def("write_metrics_csv", &write_metrics_csv, py::arg("rows"), py::arg("path"));
  m.def("write_metrics_json", &write_metrics_json, py::arg("rows"), py::arg("path"));

  // --- constants ---

  m.attr("HR_MIN_BPM") = kHrMinBpm;
  m.attr("HR_MAX_BPM") = kHrMaxBpm;
  m.attr("BAND_LO_HZ") = kBandLoHz;
  m.attr("BAND_HI_HZ") = kBandHiHz;
  m.attr("NUM_LANDMARKS") = kNumLandmarks;
}
