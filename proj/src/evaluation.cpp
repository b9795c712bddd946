#include "sim2seg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

namespace sim2seg::evaluation {
namespace {

constexpr double kTieTol = 1e-9;

void require_same_size(const InstanceMask& a, const InstanceMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorKind::kDimension, "mask sizes differ: " + std::to_string(a.width()) + "x" +
                                           std::to_string(a.height()) + " vs " +
                                           std::to_string(b.width()) + "x" +
                                           std::to_string(b.height()));
  }
}

/// Minimum-cost assignment for n <= m (row i -> column p[i]).
std::vector<int> hungarian_min(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  const int m = n == 0 ? 0 : static_cast<int>(a[0].size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(m + 1, 0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

struct Overlap {
  std::vector<Id> gt_ids, pred_ids;
  std::vector<std::size_t> gt_area, pred_area;
  std::vector<std::vector<std::size_t>> inter;  // [gt][pred]

  double iou(std::size_t g, std::size_t p) const {
    const std::size_t uni = gt_area[g] + pred_area[p] - inter[g][p];
    return uni == 0 ? 1.0 : static_cast<double>(inter[g][p]) / static_cast<double>(uni);
  }
};

Overlap overlap_table(const InstanceMask& pred, const InstanceMask& gt) {
  require_same_size(pred, gt);
  Overlap o;
  const auto gset = gt.instance_ids();
  const auto pset = pred.instance_ids();
  o.gt_ids.assign(gset.begin(), gset.end());
  o.pred_ids.assign(pset.begin(), pset.end());
  std::map<Id, std::size_t> gi, pi;
  for (std::size_t i = 0; i < o.gt_ids.size(); ++i) gi[o.gt_ids[i]] = i;
  for (std::size_t i = 0; i < o.pred_ids.size(); ++i) pi[o.pred_ids[i]] = i;
  o.gt_area.assign(o.gt_ids.size(), 0);
  o.pred_area.assign(o.pred_ids.size(), 0);
  o.inter.assign(o.gt_ids.size(), std::vector<std::size_t>(o.pred_ids.size(), 0));
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Id g = gt[i];
    const Id p = pred[i];
    if (g) ++o.gt_area[gi[g]];
    if (p) ++o.pred_area[pi[p]];
    if (g && p) ++o.inter[gi[g]][pi[p]];
  }
  return o;
}

/// Optimum over the rows/columns still free.
double restricted_optimum(const std::vector<std::vector<double>>& w,
                          const std::vector<char>& row_free, const std::vector<char>& col_free) {
  std::vector<std::vector<double>> sub;
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < col_free.size(); ++j)
    if (col_free[j]) cols.push_back(j);
  for (std::size_t i = 0; i < row_free.size(); ++i) {
    if (!row_free[i]) continue;
    std::vector<double> row;
    row.reserve(cols.size());
    for (auto j : cols) row.push_back(w[i][j]);
    sub.push_back(std::move(row));
  }
  double total = 0;
  max_weight_assignment(sub, &total);
  return total;
}

}  // namespace

double instance_iou(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kDimension, "pixel set sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double instance_iou(const InstanceMask& a, Id id_a, const InstanceMask& b, Id id_b) {
  require_same_size(a, b);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = a[i] == id_a;
    const bool in_b = b[i] == id_b;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weight,
                                       double* total) {
  const std::size_t rows = weight.size();
  const std::size_t cols = rows == 0 ? 0 : weight[0].size();
  std::vector<int> result(rows, -1);
  if (total) *total = 0;
  if (rows == 0 || cols == 0) return result;
  if (rows <= cols) {
    std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) cost[i][j] = -weight[i][j];
    result = hungarian_min(cost);
  } else {
    std::vector<std::vector<double>> cost(cols, std::vector<double>(rows));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) cost[j][i] = -weight[i][j];
    const auto col_to_row = hungarian_min(cost);
    for (std::size_t j = 0; j < cols; ++j) result[col_to_row[j]] = static_cast<int>(j);
  }
  if (total) {
    for (std::size_t i = 0; i < rows; ++i)
      if (result[i] >= 0) *total += weight[i][result[i]];
  }
  return result;
}

MatchResult match_instances(const InstanceMask& pred, const InstanceMask& gt) {
  const Overlap o = overlap_table(pred, gt);
  const std::size_t ng = o.gt_ids.size();
  const std::size_t np = o.pred_ids.size();
  std::vector<std::vector<double>> w(ng, std::vector<double>(np, 0.0));
  for (std::size_t g = 0; g < ng; ++g)
    for (std::size_t p = 0; p < np; ++p)
      if (o.inter[g][p] > 0) w[g][p] = o.iou(g, p);

  std::vector<char> row_free(ng, 1), col_free(np, 1);
  double remaining = restricted_optimum(w, row_free, col_free);

  // Fix gt ids in ascending order, each to the smallest pred id that keeps
  // the optimum reachable; zero-weight choices mean "unmatched".
  std::vector<int> chosen(ng, -1);
  for (std::size_t g = 0; g < ng; ++g) {
    row_free[g] = 0;
    for (std::size_t p = 0; p < np; ++p) {
      if (!col_free[p] || w[g][p] <= 0.0) continue;
      col_free[p] = 0;
      const double rest = restricted_optimum(w, row_free, col_free);
      if (w[g][p] + rest >= remaining - kTieTol) {
        chosen[g] = static_cast<int>(p);
        remaining = rest;
        break;
      }
      col_free[p] = 1;
    }
    if (chosen[g] < 0) remaining = restricted_optimum(w, row_free, col_free);
  }

  MatchResult out;
  std::vector<char> pred_used(np, 0);
  for (std::size_t g = 0; g < ng; ++g) {
    if (chosen[g] < 0) {
      out.unmatched_gt.push_back(o.gt_ids[g]);
      continue;
    }
    const auto p = static_cast<std::size_t>(chosen[g]);
    pred_used[p] = 1;
    out.pairs.push_back({o.gt_ids[g], o.pred_ids[p], w[g][p], o.inter[g][p], o.gt_area[g],
                         o.pred_area[p]});
  }
  for (std::size_t p = 0; p < np; ++p)
    if (!pred_used[p]) out.unmatched_pred.push_back(o.pred_ids[p]);
  return out;
}

std::optional<SampleMetrics> sample_metrics(const InstanceMask& pred, const InstanceMask& gt,
                                            const MatchResult& match,
                                            const EvalOptions& options) {
  require_same_size(pred, gt);
  const std::size_t n_gt = match.pairs.size() + match.unmatched_gt.size();
  if (n_gt == 0) return std::nullopt;
  double pa_sum = 0, iou_sum = 0;
  for (const auto& pair : match.pairs) {
    pa_sum += static_cast<double>(pair.intersection) / static_cast<double>(pair.gt_area);
    iou_sum += pair.iou;
  }
  std::size_t denom = n_gt;
  if (options.count_unmatched_pred) denom += match.unmatched_pred.size();
  SampleMetrics m;
  m.mpa = pa_sum / static_cast<double>(denom);
  m.miou = iou_sum / static_cast<double>(denom);
  m.n_gt = n_gt;
  m.false_positives = match.unmatched_pred.size();
  return m;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

EvalReport evaluate_dataset(const std::vector<InstanceMask>& preds,
                            const std::vector<InstanceMask>& gts,
                            const std::vector<std::string>& refs,
                            const std::string& condition_label, const EvalOptions& options) {
  if (preds.size() != gts.size() || (!refs.empty() && refs.size() != gts.size())) {
    throw Error(ErrorKind::kData, "evaluation lists differ in length: " +
                                      std::to_string(preds.size()) + " predictions, " +
                                      std::to_string(gts.size()) + " ground truths");
  }
  EvalReport report;
  report.condition_label = condition_label;
  report.options = options;
  std::vector<double> pa, iou;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const std::string ref = refs.empty() ? std::to_string(i) : refs[i];
    auto match = match_instances(preds[i], gts[i]);
    const auto m = sample_metrics(preds[i], gts[i], match, options);
    if (!m) {
      report.skipped.push_back(ref);
      continue;
    }
    pa.push_back(m->mpa);
    iou.push_back(m->miou);
    report.per_sample.push_back({ref, *m, std::move(match)});
  }
  auto& a = report.aggregate;
  std::tie(a.mpa_mean, a.mpa_std) = mean_std(pa);
  std::tie(a.miou_mean, a.miou_std) = mean_std(iou);
  a.n_samples = pa.size();
  return report;
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", mean, std);
  return buf;
}

std::string summary_line(const Aggregate& a) {
  return format_mean_std(a.mpa_mean, a.mpa_std) + " / " + format_mean_std(a.miou_mean, a.miou_std);
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  j["condition_label"] = r.condition_label;
  j["conventions"] = {{"matching", "hungarian max total IoU, one-to-one"},
                      {"unmatched_gt", "counted as 0"},
                      {"count_unmatched_pred", r.options.count_unmatched_pred},
                      {"std", "population"}};
  j["aggregate"] = {{"mPA_mean", r.aggregate.mpa_mean},   {"mPA_std", r.aggregate.mpa_std},
                    {"mIoU_mean", r.aggregate.miou_mean}, {"mIoU_std", r.aggregate.miou_std},
                    {"n_samples", r.aggregate.n_samples}};
  auto& samples = j["per_sample"] = nlohmann::json::array();
  for (const auto& s : r.per_sample) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : s.match.pairs) pairs.push_back({p.gt_id, p.pred_id, p.iou});
    samples.push_back({{"sample_ref", s.ref},
                       {"mPA", s.metrics.mpa},
                       {"mIoU", s.metrics.miou},
                       {"n_gt", s.metrics.n_gt},
                       {"false_positives", s.metrics.false_positives},
                       {"matches", pairs},
                       {"unmatched_gt", s.match.unmatched_gt},
                       {"unmatched_pred", s.match.unmatched_pred}});
  }
  j["skipped"] = r.skipped;
  return j.dump(2);
}

std::string render_table(const std::vector<EvalReport>& reports) {
  std::size_t label_w = 9;
  for (const auto& r : reports) label_w = std::max(label_w, r.condition_label.size());
  std::ostringstream os;
  if (!reports.empty()) {
    os << "# matching: hungarian max total IoU; unmatched gt = 0; unmatched pred "
       << (reports.front().options.count_unmatched_pred ? "counted as 0" : "excluded")
       << "; std: population\n";
  }
  os << std::left << std::setw(static_cast<int>(label_w)) << "condition"
     << "  " << std::setw(10) << "mPA"
     << "  mIoU\n";
  for (const auto& r : reports) {
    // The ± sign is two bytes in UTF-8, so pad by hand.
    const std::string mpa = format_mean_std(r.aggregate.mpa_mean, r.aggregate.mpa_std);
    const std::size_t visual = mpa.size() - 1;
    os << std::left << std::setw(static_cast<int>(label_w)) << r.condition_label << "  " << mpa
       << std::string(visual < 12 ? 12 - visual : 1, ' ')
       << format_mean_std(r.aggregate.miou_mean, r.aggregate.miou_std) << "\n";
  }
  return os.str();
}

std::string render_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "sample_ref,mPA,mIoU,n_gt,false_positives\n";
  os << std::setprecision(10);
  for (const auto& s : r.per_sample) {
    os << s.ref << ',' << s.metrics.mpa << ',' << s.metrics.miou << ',' << s.metrics.n_gt << ','
       << s.metrics.false_positives << '\n';
  }
  return os.str();
}

}  // namespace sim2seg::evaluation
