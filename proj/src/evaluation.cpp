// SPDX-License-Identifier: Apache-2.0

#include "rhythmkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rhythmkit/rng.hpp"

namespace rhythmkit {

Metrics compute_metrics(const std::vector<HrPair>& pairs) {
  if (pairs.empty()) throw ValidationError("empty list");
  const double n = static_cast<double>(pairs.size());

  Metrics m;
  m.n = static_cast<int>(pairs.size());
  double err_sum = 0.0, abs_sum = 0.0, sq_sum = 0.0, rate_sum = 0.0;
  double est_sum = 0.0, gt_sum = 0.0;
  for (const HrPair& p : pairs) {
    if (!(p.second > 0.0)) throw ValidationError("zero ground truth");
    const double err = p.first - p.second;
    err_sum += err;
    abs_sum += std::abs(err);
    sq_sum += err * err;
    rate_sum += std::abs(err) / p.second;
    est_sum += p.first;
    gt_sum += p.second;
  }
  m.mean_err_bpm = err_sum / n;
  m.mae_bpm = abs_sum / n;
  m.rmse_bpm = std::sqrt(sq_sum / n);
  m.mer_percent = rate_sum / n * 100.0;

  if (pairs.size() >= 2) {
    double var = 0.0;
    for (const HrPair& p : pairs) {
      const double d = (p.first - p.second) - m.mean_err_bpm;
      var += d * d;
    }
    m.std_err_bpm = std::sqrt(var / (n - 1.0));
  }

  const double est_mean = est_sum / n;
  const double gt_mean = gt_sum / n;
  double cov = 0.0, est_var = 0.0, gt_var = 0.0;
  for (const HrPair& p : pairs) {
    const double de = p.first - est_mean;
    const double dg = p.second - gt_mean;
    cov += de * dg;
    est_var += de * de;
    gt_var += dg * dg;
  }
  if (est_var > 0.0 && gt_var > 0.0) {
    m.pearson_r = cov / std::sqrt(est_var * gt_var);
    m.pearson_r = std::clamp(m.pearson_r, -1.0, 1.0);
  } else {
    m.pearson_r = 0.0;
    m.pearson_degenerate = true;
  }
  return m;
}

FoldPlan make_folds(const std::vector<std::string>& subject_ids, int k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("fold count must be >= 1");
  if (k > static_cast<int>(subject_ids.size()))
    throw ValidationError("fold count exceeds subject count");
  std::set<std::string> seen;
  for (const std::string& id : subject_ids)
    if (!seen.insert(id).second) throw ValidationError("duplicate subject id: " + id);

  std::vector<std::string> shuffled = subject_ids;
  Rng rng(seed);
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(shuffled[i - 1], shuffled[j]);
  }

  FoldPlan plan;
  plan.folds.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < shuffled.size(); ++i)
    plan.folds[i % static_cast<std::size_t>(k)].push_back(shuffled[i]);
  return plan;
}

BlandAltman bland_altman(const std::vector<HrPair>& pairs) {
  if (pairs.size() < 2) throw ValidationError("need >= 2 pairs");
  BlandAltman ba;
  ba.points.reserve(pairs.size());
  double diff_sum = 0.0;
  for (const HrPair& p : pairs) {
    const double diff = p.first - p.second;
    ba.points.push_back({(p.first + p.second) / 2.0, diff});
    diff_sum += diff;
  }
  const double n = static_cast<double>(pairs.size());
  ba.mean_diff = diff_sum / n;
  double var = 0.0;
  for (const auto& pt : ba.points) {
    const double d = pt.second - ba.mean_diff;
    var += d * d;
  }
  ba.std_diff = std::sqrt(var / (n - 1.0));
  ba.lower_limit = ba.mean_diff - 1.96 * ba.std_diff;
  ba.upper_limit = ba.mean_diff + 1.96 * ba.std_diff;
  return ba;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

}  // namespace

void write_bland_altman_csv(const BlandAltman& ba, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "# mean_diff=" << ba.mean_diff << " std_diff=" << ba.std_diff
      << " lower_limit=" << ba.lower_limit << " upper_limit=" << ba.upper_limit << "\n";
  out << "mean_of_pair,difference\n";
  for (const auto& pt : ba.points) out << pt.first << "," << pt.second << "\n";
  if (!out) throw IoError("short write: " + path);
}

void write_metrics_csv(const std::vector<std::pair<std::string, Metrics>>& rows,
                       const std::string& path) {
  std::ofstream out = open_out(path);
  out << "label,n,mean_err_bpm,std_err_bpm,mae_bpm,rmse_bpm,mer_percent,pearson_r,"
         "pearson_degenerate\n";
  for (const auto& [label, m] : rows)
    out << label << "," << m.n << "," << m.mean_err_bpm << "," << m.std_err_bpm << ","
        << m.mae_bpm << "," << m.rmse_bpm << "," << m.mer_percent << "," << m.pearson_r << ","
        << (m.pearson_degenerate ? 1 : 0) << "\n";
  if (!out) throw IoError("short write: " + path);
}

void write_metrics_json(const std::vector<std::pair<std::string, Metrics>>& rows,
                        const std::string& path) {
  nlohmann::json root = nlohmann::json::object();
  root["error_std_convention"] = "sample (N-1)";
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [label, m] : rows) {
    nlohmann::json row;
    row["label"] = label;
    row["n"] = m.n;
    row["mean_err_bpm"] = m.mean_err_bpm;
    row["std_err_bpm"] = m.std_err_bpm;
    row["mae_bpm"] = m.mae_bpm;
    row["rmse_bpm"] = m.rmse_bpm;
    row["mer_percent"] = m.mer_percent;
    row["pearson_r"] = m.pearson_r;
    row["pearson_degenerate"] = m.pearson_degenerate;
    list.push_back(row);
  }
  root["rows"] = list;
  std::ofstream out = open_out(path);
  out << root.dump(2) << "\n";
  if (!out) throw IoError("short write: " + path);
}

}  // namespace rhythmkit
