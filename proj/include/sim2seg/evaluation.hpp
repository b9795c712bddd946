#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sim2seg/core.hpp"

namespace sim2seg::evaluation {

using Id = InstanceMask::Id;

struct MatchPair {
  Id gt_id = 0;
  Id pred_id = 0;
  double iou = 0.0;
  std::size_t intersection = 0;
  std::size_t gt_area = 0;
  std::size_t pred_area = 0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // ascending gt_id
  std::vector<Id> unmatched_gt;
  std::vector<Id> unmatched_pred;
};

struct EvalOptions {
  /// When set, every unmatched prediction enters both means as a zero.
  bool count_unmatched_pred = false;
};

/// |a ∩ b| / |a ∪ b| over pixels with a[i] == id_a and b[i] == id_b. Both
/// empty gives 1. Throws kDimension on size mismatch.
double instance_iou(const InstanceMask& a, Id id_a, const InstanceMask& b, Id id_b);

/// Same on plain per-pixel flags.
double instance_iou(const std::vector<bool>& a, const std::vector<bool>& b);

/// Best total IoU, one-to-one. Among optimal assignments the lexicographically
/// smallest (gt_id, pred_id) list wins. Zero-IoU pairs are left unmatched.
MatchResult match_instances(const InstanceMask& pred, const InstanceMask& gt);

/// Optimal rectangular assignment maximizing the summed weight; row i maps to
/// column result[i] or -1. Exposed for testing.
std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weight,
                                       double* total = nullptr);

struct SampleMetrics {
  double mpa = 0.0;
  double miou = 0.0;
  std::size_t n_gt = 0;
  std::size_t false_positives = 0;
};

/// Mean over ground-truth objects of pixel accuracy and IoU with the matched
/// prediction (0 when unmatched). Empty ground truth yields nullopt.
std::optional<SampleMetrics> sample_metrics(const InstanceMask& pred, const InstanceMask& gt,
                                            const MatchResult& match,
                                            const EvalOptions& options = {});

struct SampleRecord {
  std::string ref;
  SampleMetrics metrics;
  MatchResult match;
};

struct Aggregate {
  double mpa_mean = 0.0;
  double mpa_std = 0.0;
  double miou_mean = 0.0;
  double miou_std = 0.0;
  std::size_t n_samples = 0;
};

struct EvalReport {
  std::string condition_label;
  EvalOptions options;
  std::vector<SampleRecord> per_sample;
  std::vector<std::string> skipped;  // refs whose ground truth had no instances
  Aggregate aggregate;
};

/// Population mean and standard deviation (divisor n).
std::pair<double, double> mean_std(const std::vector<double>& values);

/// Throws kData when the lists differ in length.
EvalReport evaluate_dataset(const std::vector<InstanceMask>& preds,
                            const std::vector<InstanceMask>& gts,
                            const std::vector<std::string>& refs,
                            const std::string& condition_label,
                            const EvalOptions& options = {});

/// "0.81±0.07"
std::string format_mean_std(double mean, double std);
/// "0.81±0.07 / 0.69±0.10"
std::string summary_line(const Aggregate& aggregate);

std::string report_json(const EvalReport& report);
/// Aligned table with one row per condition and columns mPA, mIoU.
std::string render_table(const std::vector<EvalReport>& reports);
std::string render_csv(const EvalReport& report);

}  // namespace sim2seg::evaluation
