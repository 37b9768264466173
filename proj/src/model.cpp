// SPDX-License-Identifier: Apache-2.0

#include "rhythmkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "rhythmkit/parallel.hpp"
#include "rhythmkit/rng.hpp"

namespace rhythmkit {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

}  // namespace

// --- losses --------------------------------------------------------------------

double smooth_loss(const std::vector<double>& hrs) {
  const std::size_t t = hrs.size();
  if (t < 2) throw ValidationError("smooth loss needs at least 2 estimates");
  const double mean = std::accumulate(hrs.begin(), hrs.end(), 0.0) / static_cast<double>(t);
  double sum = 0.0;
  for (double hr : hrs) sum += std::abs(hr - mean);
  return sum / static_cast<double>(t);
}

std::vector<double> smooth_loss_grad(const std::vector<double>& hrs) {
  const std::size_t t = hrs.size();
  if (t < 2) throw ValidationError("smooth loss needs at least 2 estimates");
  const double n = static_cast<double>(t);
  const double mean = std::accumulate(hrs.begin(), hrs.end(), 0.0) / n;
  double sign_sum = 0.0;
  for (double hr : hrs) sign_sum += sgn(hr - mean);
  std::vector<double> grad(t);
  for (std::size_t i = 0; i < t; ++i)
    grad[i] = (sgn(hrs[i] - mean) - sign_sum / n) / n;
  return grad;
}

LossBreakdown total_loss(const std::vector<double>& pred_hrs, const std::vector<double>& gt_hrs,
                         double lambda) {
  if (pred_hrs.size() != gt_hrs.size())
    throw ValidationError("length mismatch between estimates and labels");
  if (pred_hrs.empty()) throw ValidationError("empty estimate list");
  LossBreakdown out;
  out.lambda = lambda;
  for (std::size_t i = 0; i < pred_hrs.size(); ++i) out.l1 += std::abs(pred_hrs[i] - gt_hrs[i]);
  out.l1 /= static_cast<double>(pred_hrs.size());
  out.smooth = pred_hrs.size() >= 2 ? smooth_loss(pred_hrs) : 0.0;
  out.total = out.l1 + lambda * out.smooth;
  return out;
}

// --- configs -------------------------------------------------------------------

void BackboneConfig::validate() const {
  if (variant != "compact" && variant != "resnet18-style")
    throw ValidationError("unknown backbone variant: " + variant);
  if (t_frames < 1 || n_blocks < 1 || channels < 1)
    throw ValidationError("backbone input shape must be positive");
}

void TrainConfig::validate() const {
  BackboneConfig probe;
  probe.variant = variant;
  probe.validate();
  if (epochs < 1 || epochs > 50) throw ValidationError("epochs must be between 1 and 50");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (batch_units < 1) throw ValidationError("batch size must be >= 1");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0))
    throw ValidationError("mask probability must be in [0, 1]");
  if (mask_min_len < 1 || mask_max_len < mask_min_len)
    throw ValidationError("mask lengths must satisfy 1 <= min <= max");
  if (smooth_group < 2) throw ValidationError("smooth group must be >= 2");
  if (!(fps_train > 0.0)) throw ValidationError("training frame rate must be positive");
  if (grid_rows < 1 || grid_cols < 1) throw ValidationError("grid must be at least 1x1");
  if (jobs < 1) throw ValidationError("jobs must be >= 1");
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file: " + path);
  TrainConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + " is not key=value");
    auto trim = [](std::string s) {
      const std::size_t a = s.find_first_not_of(" \t");
      const std::size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "variant") config.variant = value;
      else if (key == "use_gru") config.use_gru = value == "1" || value == "true";
      else if (key == "epochs") config.epochs = std::stoi(value);
      else if (key == "lr") config.lr = std::stod(value);
      else if (key == "lambda") config.lambda = std::stod(value);
      else if (key == "batch_units") config.batch_units = std::stoi(value);
      else if (key == "mask_prob") config.mask_prob = std::stod(value);
      else if (key == "mask_min_len") config.mask_min_len = std::stoi(value);
      else if (key == "mask_max_len") config.mask_max_len = std::stoi(value);
      else if (key == "smooth_group") config.smooth_group = std::stoi(value);
      else if (key == "fps_train") config.fps_train = std::stod(value);
      else if (key == "grid_rows") config.grid_rows = std::stoi(value);
      else if (key == "grid_cols") config.grid_cols = std::stoi(value);
      else if (key == "colorspace") config.colorspace = parse_colorspace(value);
      else if (key == "seed") config.seed = std::stoull(value);
      else throw ValidationError("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw ValidationError("bad value for config key " + key + ": " + value);
    } catch (const std::out_of_range&) {
      throw ValidationError("bad value for config key " + key + ": " + value);
    }
  }
  config.validate();
  return config;
}

void write_train_config(const TrainConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "variant=" << config.variant << "\n"
      << "use_gru=" << (config.use_gru ? 1 : 0) << "\n"
      << "epochs=" << config.epochs << "\n"
      << "lr=" << format_double(config.lr) << "\n"
      << "lambda=" << format_double(config.lambda) << "\n"
      << "batch_units=" << config.batch_units << "\n"
      << "mask_prob=" << format_double(config.mask_prob) << "\n"
      << "mask_min_len=" << config.mask_min_len << "\n"
      << "mask_max_len=" << config.mask_max_len << "\n"
      << "smooth_group=" << config.smooth_group << "\n"
      << "fps_train=" << format_double(config.fps_train) << "\n"
      << "grid_rows=" << config.grid_rows << "\n"
      << "grid_cols=" << config.grid_cols << "\n"
      << "colorspace=" << colorspace_name(config.colorspace) << "\n"
      << "seed=" << config.seed << "\n";
  if (!out) throw IoError("short write: " + path);
}

// --- per-clip and recurrent inference helpers -----------------------------------

namespace {

void check_map_shape(const FloatModel& model, const SpatialTemporalMap& map) {
  const BackboneConfig& c = model.config();
  if (map.t_frames != c.t_frames || map.n_blocks != c.n_blocks || map.channels != c.channels)
    throw ValidationError("map shape (" + std::to_string(map.t_frames) + ", " +
                          std::to_string(map.n_blocks) + ", " + std::to_string(map.channels) +
                          ") does not match model input (" + std::to_string(c.t_frames) + ", " +
                          std::to_string(c.n_blocks) + ", " + std::to_string(c.channels) + ")");
}

double destandardize(const FloatModel& model, double raw) {
  return model.target_mean + model.target_std * raw;
}

}  // namespace

ClipForward forward_clip(FloatModel& model, const SpatialTemporalMap& map) {
  check_map_shape(model, map);
  const nn::Tensor<float> x = map_to_input<float>(map);
  ClipForward out;
  out.feature = model.backbone().forward(x, /*cache=*/false);
  const nn::Tensor<float> y = model.hr_head().forward(out.feature, /*cache=*/false);
  out.hr_raw_bpm = destandardize(model, static_cast<double>(y.data[0]));
  return out;
}

std::vector<double> gru_forward(FloatModel& model,
                                const std::vector<nn::Tensor<float>>& features) {
  std::vector<nn::Tensor<float>> normed;
  normed.reserve(features.size());
  for (const nn::Tensor<float>& f : features) normed.push_back(nn::rms_normalize(f));
  const std::vector<nn::Tensor<float>> hs =
      model.gru().forward_sequence(normed, /*cache=*/false);
  std::vector<double> out;
  out.reserve(hs.size());
  for (const nn::Tensor<float>& h : hs) {
    const nn::Tensor<float> y = model.gru_head().forward(h, /*cache=*/false);
    out.push_back(destandardize(model, static_cast<double>(y.data[0])));
  }
  return out;
}

// --- training ------------------------------------------------------------------

namespace {

// One smooth-loss unit: adjacent clips of one video, identified by indices
// into the training dataset.
struct TrainUnit {
  std::vector<int> map_indices;
};

std::vector<TrainUnit> build_units(const std::vector<SpatialTemporalMap>& dataset,
                                   int smooth_group) {
  // Group map indices by video, keeping dataset order inside each video,
  // then order clips by their start frame.
  std::vector<std::pair<std::string, std::vector<int>>> videos;
  std::map<std::string, std::size_t> video_slot;
  for (int i = 0; i < static_cast<int>(dataset.size()); ++i) {
    const std::string key = dataset[i].subject_id + "\x1f" + dataset[i].video_id;
    auto [it, inserted] = video_slot.emplace(key, videos.size());
    if (inserted) videos.push_back({key, {}});
    videos[it->second].second.push_back(i);
  }
  std::vector<TrainUnit> units;
  for (auto& [key, indices] : videos) {
    std::stable_sort(indices.begin(), indices.end(), [&](int a, int b) {
      return dataset[a].clip.start_frame < dataset[b].clip.start_frame;
    });
    for (std::size_t pos = 0; pos < indices.size(); pos += static_cast<std::size_t>(smooth_group)) {
      TrainUnit unit;
      const std::size_t end = std::min(indices.size(), pos + static_cast<std::size_t>(smooth_group));
      unit.map_indices.assign(indices.begin() + static_cast<std::ptrdiff_t>(pos),
                              indices.begin() + static_cast<std::ptrdiff_t>(end));
      units.push_back(std::move(unit));
    }
  }
  return units;
}

struct UnitResult {
  double abs_err_sum = 0.0;  // Σ|pred − gt| over the unit's clips (bpm)
  double smooth = 0.0;       // smooth loss over the unit (0 when < 2 clips)
  int clips = 0;
  bool has_smooth = false;
};

// Forward/backward for one unit on one model replica. Gradients accumulate
// into the replica's parameter grads; scale factors fold the batch-level
// normalization (1/clips_in_batch for L1, λ/units_in_batch for smooth) into
// the per-clip bpm-space gradients.
UnitResult run_unit(FloatModel& model, const std::vector<SpatialTemporalMap>& dataset,
                    const TrainUnit& unit, const TrainConfig& config, int epoch,
                    double l1_scale, double smooth_scale) {
  const int n_clips = static_cast<int>(unit.map_indices.size());
  std::vector<double> ratios(static_cast<std::size_t>(n_clips), 1.0);
  std::vector<double> preds(static_cast<std::size_t>(n_clips), 0.0);
  std::vector<double> gts(static_cast<std::size_t>(n_clips), 0.0);
  std::vector<nn::Tensor<float>> features;
  features.reserve(static_cast<std::size_t>(n_clips));

  for (int k = 0; k < n_clips; ++k) {
    const SpatialTemporalMap& map = dataset[static_cast<std::size_t>(unit.map_indices[k])];
    check_map_shape(model, map);
    if (!map.clip.gt_hr_bpm) throw ValidationError("training map without an HR label");
    gts[static_cast<std::size_t>(k)] = *map.clip.gt_hr_bpm;
    if (map.fps > 0.0) ratios[static_cast<std::size_t>(k)] = map.fps / config.fps_train;

    nn::Tensor<float> x;
    if (config.mask_prob > 0.0) {
      const SpatialTemporalMap masked =
          mask_augment(map, mix_seed(config.seed, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(unit.map_indices[k])),
                       config.mask_min_len, config.mask_max_len, config.mask_prob);
      x = map_to_input<float>(masked);
    } else {
      x = map_to_input<float>(map);
    }
    features.push_back(model.backbone().forward(x, /*cache=*/true));
  }

  std::vector<nn::Tensor<float>> hs;
  if (model.use_gru()) {
    std::vector<nn::Tensor<float>> normed;
    normed.reserve(features.size());
    for (const nn::Tensor<float>& f : features) normed.push_back(nn::rms_normalize(f));
    hs = model.gru().forward_sequence(normed, /*cache=*/true);
    for (int k = 0; k < n_clips; ++k) {
      const nn::Tensor<float> y = model.gru_head().forward(hs[static_cast<std::size_t>(k)], true);
      preds[static_cast<std::size_t>(k)] =
          destandardize(model, static_cast<double>(y.data[0])) * ratios[static_cast<std::size_t>(k)];
    }
  } else {
    for (int k = 0; k < n_clips; ++k) {
      const nn::Tensor<float> y = model.hr_head().forward(features[static_cast<std::size_t>(k)], true);
      preds[static_cast<std::size_t>(k)] =
          destandardize(model, static_cast<double>(y.data[0])) * ratios[static_cast<std::size_t>(k)];
    }
  }

  UnitResult result;
  result.clips = n_clips;
  for (int k = 0; k < n_clips; ++k)
    result.abs_err_sum += std::abs(preds[static_cast<std::size_t>(k)] - gts[static_cast<std::size_t>(k)]);
  result.has_smooth = n_clips >= 2;
  if (result.has_smooth) result.smooth = smooth_loss(preds);

  // Gradient of the batch loss w.r.t. each clip prediction (bpm space).
  std::vector<double> grad_pred(static_cast<std::size_t>(n_clips), 0.0);
  for (int k = 0; k < n_clips; ++k)
    grad_pred[static_cast<std::size_t>(k)] =
        l1_scale * sgn(preds[static_cast<std::size_t>(k)] - gts[static_cast<std::size_t>(k)]);
  if (result.has_smooth && smooth_scale != 0.0) {
    const std::vector<double> gs = smooth_loss_grad(preds);
    for (int k = 0; k < n_clips; ++k)
      grad_pred[static_cast<std::size_t>(k)] += smooth_scale * gs[static_cast<std::size_t>(k)];
  }
  // Chain through de-standardization and the fps ratio.
  std::vector<float> grad_raw(static_cast<std::size_t>(n_clips), 0.0f);
  for (int k = 0; k < n_clips; ++k)
    grad_raw[static_cast<std::size_t>(k)] = static_cast<float>(
        grad_pred[static_cast<std::size_t>(k)] * model.target_std * ratios[static_cast<std::size_t>(k)]);

  if (model.use_gru()) {
    std::vector<nn::Tensor<float>> grad_hs(static_cast<std::size_t>(n_clips));
    for (int k = n_clips - 1; k >= 0; --k) {  // reverse order: head caches are a stack
      nn::Tensor<float> gy({1});
      gy.data[0] = grad_raw[static_cast<std::size_t>(k)];
      grad_hs[static_cast<std::size_t>(k)] = model.gru_head().backward(gy);
    }
    const std::vector<nn::Tensor<float>> grad_normed = model.gru().backward_sequence(grad_hs);
    for (int k = n_clips - 1; k >= 0; --k)
      model.backbone().backward(nn::rms_normalize_backward(
          features[static_cast<std::size_t>(k)], grad_normed[static_cast<std::size_t>(k)]));
  } else {
    for (int k = n_clips - 1; k >= 0; --k) {
      nn::Tensor<float> gy({1});
      gy.data[0] = grad_raw[static_cast<std::size_t>(k)];
      model.backbone().backward(model.hr_head().backward(gy));
    }
  }
  return result;
}

void copy_param_values(const std::vector<nn::ParamRef<float>>& src,
                       const std::vector<nn::ParamRef<float>>& dst) {
  if (src.size() != dst.size()) throw ValidationError("replica parameter mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].value->data = src[i].value->data;
}

}  // namespace

std::unique_ptr<FloatModel> train_model(const std::vector<SpatialTemporalMap>& dataset,
                                        const TrainConfig& config, TrainLog* log,
                                        const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw ValidationError("empty dataset");
  for (const SpatialTemporalMap& map : dataset)
    if (!map.clip.gt_hr_bpm) throw ValidationError("training map without an HR label");

  BackboneConfig backbone_config;
  backbone_config.variant = config.variant;
  backbone_config.t_frames = dataset.front().t_frames;
  backbone_config.n_blocks = dataset.front().n_blocks;
  backbone_config.channels = dataset.front().channels;

  auto model = std::make_unique<FloatModel>(backbone_config, config.use_gru);
  Rng init_rng(mix_seed(config.seed, 0x1217));
  model->init(init_rng);
  model->fps_train = config.fps_train;
  model->grid_rows = config.grid_rows;
  model->grid_cols = config.grid_cols;
  model->colorspace = config.colorspace;

  // Standardize the regression target over the training labels.
  {
    double sum = 0.0;
    for (const SpatialTemporalMap& map : dataset) sum += *map.clip.gt_hr_bpm;
    const double mean = sum / static_cast<double>(dataset.size());
    double var = 0.0;
    for (const SpatialTemporalMap& map : dataset) {
      const double d = *map.clip.gt_hr_bpm - mean;
      var += d * d;
    }
    var /= static_cast<double>(dataset.size());
    model->target_mean = mean;
    model->target_std = var > 1e-12 ? std::sqrt(var) : 1.0;
  }

  const std::vector<TrainUnit> units = build_units(dataset, config.smooth_group);
  const std::vector<nn::ParamRef<float>> params = model->params();
  nn::AdamOptimizer<float> optimizer(params, config.lr);

  // One replica per batch slot keeps unit gradients in separate buffers, so
  // the reduction order (and therefore the result) is independent of how
  // many worker threads ran.
  const int n_slots = std::min<int>(config.batch_units, static_cast<int>(units.size()));
  std::vector<std::unique_ptr<FloatModel>> replicas;
  std::vector<std::vector<nn::ParamRef<float>>> replica_params;
  for (int s = 0; s < n_slots; ++s) {
    replicas.push_back(std::make_unique<FloatModel>(backbone_config, config.use_gru));
    replicas.back()->target_mean = model->target_mean;
    replicas.back()->target_std = model->target_std;
    replicas.back()->fps_train = model->fps_train;
    replica_params.push_back(replicas.back()->params());
  }

  std::vector<int> order(units.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Deterministic shuffle, independent of job count.
    Rng shuffle_rng(mix_seed(config.seed, 0x5348u, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_abs_err = 0.0;
    double epoch_smooth = 0.0;
    long long epoch_clips = 0;
    long long epoch_units = 0;

    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<std::size_t>(config.batch_units)) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + static_cast<std::size_t>(config.batch_units));
      const int batch_n = static_cast<int>(batch_end - batch_start);

      int clips_in_batch = 0;
      int smooth_units_in_batch = 0;
      for (int u = 0; u < batch_n; ++u) {
        const TrainUnit& unit = units[static_cast<std::size_t>(order[batch_start + u])];
        clips_in_batch += static_cast<int>(unit.map_indices.size());
        if (unit.map_indices.size() >= 2) ++smooth_units_in_batch;
      }
      const double l1_scale = 1.0 / static_cast<double>(clips_in_batch);
      const double smooth_scale =
          smooth_units_in_batch > 0 ? config.lambda / static_cast<double>(smooth_units_in_batch) : 0.0;

      std::vector<UnitResult> results(static_cast<std::size_t>(batch_n));
      parallel_for(batch_n, config.jobs, [&](int u) {
        FloatModel& replica = *replicas[static_cast<std::size_t>(u)];
        copy_param_values(params, replica_params[static_cast<std::size_t>(u)]);
        replica.zero_grads();
        replica.clear_cache();
        results[static_cast<std::size_t>(u)] =
            run_unit(replica, dataset, units[static_cast<std::size_t>(order[batch_start + u])],
                     config, epoch, l1_scale, smooth_scale);
      });

      // Fixed-order reduction into the live model's gradient buffers.
      model->zero_grads();
      for (int u = 0; u < batch_n; ++u) {
        const std::vector<nn::ParamRef<float>>& rp = replica_params[static_cast<std::size_t>(u)];
        for (std::size_t p = 0; p < params.size(); ++p) {
          const std::vector<float>& src = rp[p].grad->data;
          std::vector<float>& dst = params[p].grad->data;
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
        const UnitResult& r = results[static_cast<std::size_t>(u)];
        epoch_abs_err += r.abs_err_sum;
        epoch_clips += r.clips;
        if (r.has_smooth) {
          epoch_smooth += r.smooth;
          ++epoch_units;
        }
        const double batch_loss = r.abs_err_sum * l1_scale + r.smooth * smooth_scale;
        if (!std::isfinite(batch_loss))
          throw ValidationError("non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      optimizer.step(params);
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.l1_bpm = epoch_clips > 0 ? epoch_abs_err / static_cast<double>(epoch_clips) : 0.0;
    stats.smooth_bpm = epoch_units > 0 ? epoch_smooth / static_cast<double>(epoch_units) : 0.0;
    stats.total = stats.l1_bpm + config.lambda * stats.smooth_bpm;
    if (!std::isfinite(stats.total))
      throw ValidationError("non-finite loss at epoch " + std::to_string(epoch + 1));
    if (log) log->epochs.push_back(stats);
    if (on_epoch && !on_epoch(stats, *model)) break;
  }
  return model;
}

// --- inference -----------------------------------------------------------------

std::vector<double> predict_maps(FloatModel& model, const std::vector<SpatialTemporalMap>& maps) {
  if (maps.empty()) throw ValidationError("empty map list");
  std::vector<double> out(maps.size(), 0.0);
  if (model.use_gru()) {
    std::vector<nn::Tensor<float>> features;
    features.reserve(maps.size());
    for (const SpatialTemporalMap& map : maps)
      features.push_back(forward_clip(model, map).feature);
    const std::vector<double> preds = gru_forward(model, features);
    for (std::size_t i = 0; i < maps.size(); ++i) {
      const double ratio = maps[i].fps > 0.0 ? maps[i].fps / model.fps_train : 1.0;
      out[i] = preds[i] * ratio;
    }
  } else {
    for (std::size_t i = 0; i < maps.size(); ++i) {
      const double ratio = maps[i].fps > 0.0 ? maps[i].fps / model.fps_train : 1.0;
      out[i] = forward_clip(model, maps[i]).hr_raw_bpm * ratio;
    }
  }
  return out;
}

HrEstimate predict_video(FloatModel& model, const FrameSequence& seq,
                         const LandmarkTrack& landmarks, const LandmarkSchema& schema,
                         double step_seconds, int jobs) {
  const BackboneConfig& c = model.config();
  const std::vector<ClipWindow> windows =
      slide_windows(seq.size(), seq.nominal_fps, c.t_frames, step_seconds);

  const int n = static_cast<int>(windows.size());
  std::vector<nn::Tensor<float>> features(static_cast<std::size_t>(n));
  std::vector<double> preds(static_cast<std::size_t>(n), 0.0);
  parallel_for(n, jobs, [&](int i) {
    const SpatialTemporalMap map =
        build_stmap(seq, landmarks, windows[static_cast<std::size_t>(i)], model.grid_rows,
                    model.grid_cols, model.colorspace, schema);
    const ClipForward fwd = forward_clip(model, map);
    features[static_cast<std::size_t>(i)] = fwd.feature;
    preds[static_cast<std::size_t>(i)] = fwd.hr_raw_bpm;
  });
  if (model.use_gru()) {
    const std::vector<double> gru_preds = gru_forward(model, features);
    preds = gru_preds;
  }

  const double ratio = model.fps_train > 0.0 ? seq.nominal_fps / model.fps_train : 1.0;
  double sum = 0.0;
  for (double p : preds) sum += p * ratio;

  HrEstimate est;
  est.hr_bpm = sum / static_cast<double>(n);
  est.clip.start_frame = 0;
  est.clip.length = seq.size();
  est.clip.step_frames = windows.front().step_frames;
  return est;
}

// --- checkpoints ----------------------------------------------------------------

void save_model(FloatModel& model, const std::string& path,
                const std::map<std::string, std::string>& extra_meta) {
  std::map<std::string, std::string> meta = extra_meta;
  meta["variant"] = model.config().variant;
  meta["use_gru"] = model.use_gru() ? "1" : "0";
  meta["t_frames"] = std::to_string(model.config().t_frames);
  meta["n_blocks"] = std::to_string(model.config().n_blocks);
  meta["channels"] = std::to_string(model.config().channels);
  meta["fps_train"] = format_double(model.fps_train);
  meta["target_mean"] = format_double(model.target_mean);
  meta["target_std"] = format_double(model.target_std);
  meta["grid_rows"] = std::to_string(model.grid_rows);
  meta["grid_cols"] = std::to_string(model.grid_cols);
  meta["colorspace"] = colorspace_name(model.colorspace);
  nn::save_checkpoint(path, model.params(), meta);
}

std::unique_ptr<FloatModel> load_model(const std::string& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  auto require = [&](const std::string& key) -> const std::string& {
    auto it = ck.meta.find(key);
    if (it == ck.meta.end()) throw IoError("checkpoint missing metadata key: " + key);
    return it->second;
  };
  BackboneConfig config;
  try {
    config.variant = require("variant");
    config.t_frames = std::stoi(require("t_frames"));
    config.n_blocks = std::stoi(require("n_blocks"));
    config.channels = std::stoi(require("channels"));
    auto model = std::make_unique<FloatModel>(config, require("use_gru") == "1");
    model->fps_train = std::stod(require("fps_train"));
    model->target_mean = std::stod(require("target_mean"));
    model->target_std = std::stod(require("target_std"));
    model->grid_rows = std::stoi(require("grid_rows"));
    model->grid_cols = std::stoi(require("grid_cols"));
    model->colorspace = parse_colorspace(require("colorspace"));

    const std::vector<nn::ParamRef<float>> params = model->params();
    if (params.size() != ck.params.size())
      throw IoError("checkpoint parameter set mismatch: file has " +
                    std::to_string(ck.params.size()) + ", model needs " +
                    std::to_string(params.size()));
    for (const nn::ParamRef<float>& p : params) {
      auto it = ck.params.find(p.name);
      if (it == ck.params.end()) throw IoError("checkpoint missing parameter: " + p.name);
      if (!it->second.same_shape(*p.value))
        throw IoError("checkpoint shape mismatch for parameter: " + p.name);
      p.value->data = it->second.data;
    }
    return model;
  } catch (const std::invalid_argument&) {
    throw IoError("bad checkpoint metadata in " + path);
  } catch (const std::out_of_range&) {
    throw IoError("bad checkpoint metadata in " + path);
  }
}

}  // namespace rhythmkit
