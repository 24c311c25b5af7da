#pragma once

// tIoU, average precision with the all-points interpolated precision
// envelope, mAP over threshold grids, and the snippet-set diagnostics
// (top-1 accuracy and ground-truth action proportion).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acsloc/localization.hpp"

namespace acsloc {

struct GroundTruthSegment {
  std::string video_id;
  int cls = 0;  // 1-based
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  bool operator==(const GroundTruthSegment&) const = default;
};

struct VideoDetection {
  std::string video_id;
  Detection det;

  bool operator==(const VideoDetection&) const = default;
};

inline std::vector<double> thumos_grid() { return {0.3, 0.4, 0.5, 0.6, 0.7}; }

inline std::vector<double> anet_grid() {
  std::vector<double> g;
  for (int i = 0; i < 10; ++i) g.push_back(0.5 + 0.05 * i);
  return g;
}

inline std::vector<double> grid_by_name(const std::string& name) {
  if (name == "thumos") return thumos_grid();
  if (name == "anet") return anet_grid();
  throw ConfigError("unknown evaluation grid '" + name + "' (expected thumos or anet)");
}

/// True-positive flags in ranked order. Detections are ranked by score
/// (descending, stable); each is matched to the unmatched ground truth of the
/// same video with the highest tIoU >= thr (lowest index on ties).
inline std::vector<bool> match_detections(const std::vector<VideoDetection>& ranked,
                                          const std::vector<GroundTruthSegment>& gts, double thr) {
  std::vector<bool> used(gts.size(), false);
  std::vector<bool> tp(ranked.size(), false);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& d = ranked[i];
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j] || gts[j].video_id != d.video_id) continue;
      const double ov = tiou(d.det.start, d.det.end, gts[j].start, gts[j].end);
      if (ov >= thr && ov > best) {
        best = ov;
        best_j = j;
      }
    }
    if (best_j < gts.size()) {
      used[best_j] = true;
      tp[i] = true;
    }
  }
  return tp;
}

inline std::vector<VideoDetection> rank_by_score(std::vector<VideoDetection> dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const VideoDetection& a, const VideoDetection& b) {
    return a.det.score > b.det.score;
  });
  return dets;
}

/// Interpolated AP: precision envelope integrated over recall steps.
/// Returns nullopt when there is no ground truth.
inline std::optional<double> average_precision(const std::vector<VideoDetection>& dets,
                                               const std::vector<GroundTruthSegment>& gts,
                                               double thr) {
  if (gts.empty()) return std::nullopt;
  const auto ranked = rank_by_score(dets);
  const auto tp = match_detections(ranked, gts, thr);
  const double npos = static_cast<double>(gts.size());
  std::vector<double> mrec{0.0}, mprec{0.0};
  double tps = 0.0, fps = 0.0;
  for (bool hit : tp) {
    (hit ? tps : fps) += 1.0;
    mrec.push_back(tps / npos);
    mprec.push_back(tps / (tps + fps));
  }
  mrec.push_back(1.0);
  mprec.push_back(0.0);
  for (std::size_t i = mprec.size() - 1; i-- > 0;) mprec[i] = std::max(mprec[i], mprec[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mprec[i];
  }
  return ap;
}

struct Ratio {
  double num = 0.0;
  double den = 0.0;

  std::optional<double> value() const {
    if (!(den > 0.0)) return std::nullopt;
    return num / den;
  }
  Ratio& operator+=(const Ratio& o) {
    num += o.num;
    den += o.den;
    return *this;
  }
};

struct SetDiagnostics {
  std::optional<double> top1;        // A_1
  std::optional<double> proportion;  // R_z
  std::optional<double> average_map; // localization from the set's runs
};

struct EvalReport {
  std::vector<double> grid;
  std::vector<std::optional<double>> map;                        // per threshold
  std::map<int, std::vector<std::optional<double>>> class_ap;    // class -> per threshold
  std::optional<double> average_map;
  std::map<std::string, SetDiagnostics> diagnostics;             // fg, bg, a, c, gt
};

/// mAP per threshold over classes that have ground truth; average over the grid.
inline EvalReport map_report(const std::vector<VideoDetection>& dets,
                             const std::vector<GroundTruthSegment>& gts,
                             const std::vector<double>& grid, int num_classes) {
  if (grid.empty()) throw ConfigError("map_report: empty threshold grid");
  EvalReport rep;
  rep.grid = grid;
  std::map<int, std::vector<VideoDetection>> dets_by_class;
  std::map<int, std::vector<GroundTruthSegment>> gts_by_class;
  for (const auto& d : dets) dets_by_class[d.det.cls].push_back(d);
  for (const auto& g : gts) gts_by_class[g.cls].push_back(g);
  for (int c = 1; c <= num_classes; ++c) {
    auto& row = rep.class_ap[c];
    for (double thr : grid) row.push_back(average_precision(dets_by_class[c], gts_by_class[c], thr));
  }
  double grid_sum = 0.0;
  bool any = false;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double sum = 0.0;
    int count = 0;
    for (const auto& [c, row] : rep.class_ap) {
      if (row[k]) {
        sum += *row[k];
        ++count;
      }
    }
    if (count > 0) {
      rep.map.push_back(sum / count);
      grid_sum += sum / count;
      any = true;
    } else {
      rep.map.push_back(std::nullopt);
    }
  }
  if (any) rep.average_map = grid_sum / static_cast<double>(grid.size());
  return rep;
}

// ---------------------------------------------------------------------------
// Snippet-set diagnostics

struct SnippetSets {
  std::vector<std::size_t> fg, bg, action, context, gt;
};

/// fg: sap > 0.5; bg: complement; action: fg with action attention above
/// `action_threshold`; context: fg minus action; gt: snippets in any GT span.
inline SnippetSets collect_snippet_sets(std::span<const double> sap, std::span<const double> att_a,
                                        const std::vector<GroundTruthSegment>& gts,
                                        double action_threshold = action_attention_threshold(0.5)) {
  if (sap.size() != att_a.size()) throw DimensionError("collect_snippet_sets: length mismatch");
  SnippetSets s;
  std::vector<bool> in_gt(sap.size(), false);
  for (const auto& g : gts) {
    for (std::size_t t = g.start; t < std::min(g.end, sap.size()); ++t) in_gt[t] = true;
  }
  for (std::size_t t = 0; t < sap.size(); ++t) {
    if (sap[t] > 0.5) {
      s.fg.push_back(t);
      (att_a[t] > action_threshold ? s.action : s.context).push_back(t);
    } else {
      s.bg.push_back(t);
    }
    if (in_gt[t]) s.gt.push_back(t);
  }
  return s;
}

/// Counts snippets of `set` whose SCP argmax over classes 1..N (background
/// row excluded) is one of `gt_classes`.
inline Ratio top1_counts(const std::vector<std::size_t>& set, const Tensor2D& scp,
                         const std::vector<int>& gt_classes) {
  Ratio r;
  for (std::size_t t : set) {
    std::size_t best = 1;
    for (std::size_t n = 2; n < scp.rows(); ++n) {
      if (scp(n, t) > scp(best, t)) best = n;
    }
    if (std::find(gt_classes.begin(), gt_classes.end(), static_cast<int>(best)) != gt_classes.end()) {
      r.num += 1.0;
    }
    r.den += 1.0;
  }
  return r;
}

inline std::optional<double> top1_accuracy(const std::vector<std::size_t>& set, const Tensor2D& scp,
                                           const std::vector<int>& gt_classes) {
  return top1_counts(set, scp, gt_classes).value();
}

/// Per-snippet softmax over classes 1..N of an (N+1)-row SCP matrix; row
/// n-1 of the result is class n.
inline Tensor2D class_probabilities(const Tensor2D& scp) {
  const std::size_t N = scp.rows() - 1;
  Tensor2D out(N, scp.cols());
  for (std::size_t t = 0; t < scp.cols(); ++t) {
    std::vector<double> z(N);
    for (std::size_t n = 0; n < N; ++n) z[n] = scp(n + 1, t);
    const auto q = softmax(z);
    for (std::size_t n = 0; n < N; ++n) out(n, t) = q[n];
  }
  return out;
}

/// Sum of ground-truth-class probability over the set divided by the sum of
/// all class probability. `prob` rows are classes 1..N.
inline Ratio proportion_counts(const std::vector<std::size_t>& set, const Tensor2D& prob,
                               const std::vector<int>& gt_classes) {
  Ratio r;
  for (std::size_t t : set) {
    for (std::size_t n = 0; n < prob.rows(); ++n) {
      const double v = prob(n, t);
      r.den += v;
      if (std::find(gt_classes.begin(), gt_classes.end(), static_cast<int>(n + 1)) !=
          gt_classes.end()) {
        r.num += v;
      }
    }
  }
  return r;
}

inline std::optional<double> gt_action_proportion(const std::vector<std::size_t>& set,
                                                  const Tensor2D& prob,
                                                  const std::vector<int>& gt_classes) {
  return proportion_counts(set, prob, gt_classes).value();
}

}  // namespace acsloc
