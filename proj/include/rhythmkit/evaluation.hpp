// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rhythmkit/types.hpp"

namespace rhythmkit {

// Paired (estimate, ground truth) HR readings in bpm.
using HrPair = std::pair<double, double>;

// Regression error summary. Error std uses the sample (N−1) convention;
// for a single pair it is reported as 0.
struct Metrics {
  double mean_err_bpm = 0.0;
  double std_err_bpm = 0.0;
  double mae_bpm = 0.0;
  double rmse_bpm = 0.0;
  double mer_percent = 0.0;  // mean of |err|/gt × 100, per sample
  double pearson_r = 0.0;
  bool pearson_degenerate = false;  // r had zero variance on a side; reported as 0
  int n = 0;
};

// err = est − gt per pair; see Metrics for conventions. Throws
// ValidationError on an empty list or a non-positive ground-truth value.
Metrics compute_metrics(const std::vector<HrPair>& pairs);

// Subject-exclusive cross-validation folds: every subject appears in
// exactly one fold.
struct FoldPlan {
  std::vector<std::vector<std::string>> folds;
};

// Seeded shuffle followed by round-robin assignment, so fold sizes differ
// by at most 1. Throws ValidationError when k < 1, k exceeds the subject
// count, or a subject id repeats.
FoldPlan make_folds(const std::vector<std::string>& subject_ids, int k, std::uint64_t seed);

// Agreement-plot data: one (mean-of-pair, difference) point per pair and
// the 95% limits mean_diff ± 1.96·std_diff (sample std).
struct BlandAltman {
  std::vector<std::pair<double, double>> points;  // ((est+gt)/2, est−gt)
  double mean_diff = 0.0;
  double std_diff = 0.0;
  double lower_limit = 0.0;
  double upper_limit = 0.0;
};

// Throws ValidationError("need >= 2 pairs") below two pairs (the limits are
// undefined there).
BlandAltman bland_altman(const std::vector<HrPair>& pairs);

// CSV of the agreement points with a header comment carrying the limits.
void write_bland_altman_csv(const BlandAltman& ba, const std::string& path);

// Metrics reports: CSV with one row per label (e.g. per fold or per
// estimator) and a JSON summary of the same rows.
void write_metrics_csv(const std::vector<std::pair<std::string, Metrics>>& rows,
                       const std::string& path);
void write_metrics_json(const std::vector<std::pair<std::string, Metrics>>& rows,
                        const std::string& path);

}  // namespace rhythmkit
