#pragma once

// Slow, direct reference implementations used as oracles by the
// verification suite and the tests. They deliberately avoid sharing code
// with the production paths they check.

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

#include "acsloc/evaluation.hpp"
#include "acsloc/localization.hpp"

namespace acsloc::reference {

/// Direct OIC: gather the outer snippets, average both windows.
inline double oic_score(std::size_t start, std::size_t end, const std::vector<double>& v) {
  const std::size_t len = end - start;
  std::size_t tau = static_cast<std::size_t>(std::lround(static_cast<double>(len) / 4.0));
  if (tau < 1) tau = 1;
  double inner = 0.0;
  for (std::size_t t = start; t < end; ++t) inner += v[t];
  inner /= static_cast<double>(len);
  std::vector<double> outer;
  for (std::size_t t = start - std::min(start, tau); t < start; ++t) outer.push_back(v[t]);
  for (std::size_t t = end; t < end + tau && t < v.size(); ++t) outer.push_back(v[t]);
  if (outer.empty()) return inner;
  double s = 0.0;
  for (double x : outer) s += x;
  return inner - s / static_cast<double>(outer.size());
}

/// Every (s, e) whose snippets all exceed the threshold and that cannot be
/// extended on either side.
inline std::vector<std::pair<std::size_t, std::size_t>> maximal_runs(const std::vector<double>& seq,
                                                                     double threshold) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t T = seq.size();
  for (std::size_t s = 0; s < T; ++s) {
    for (std::size_t e = s + 1; e <= T; ++e) {
      bool inside = true;
      for (std::size_t t = s; t < e; ++t) inside = inside && seq[t] > threshold;
      const bool left_closed = s == 0 || !(seq[s - 1] > threshold);
      const bool right_closed = e == T || !(seq[e] > threshold);
      if (inside && left_closed && right_closed) out.emplace_back(s, e);
    }
  }
  return out;
}

inline double interval_iou(std::size_t s1, std::size_t e1, std::size_t s2, std::size_t e2) {
  std::size_t inter = 0;
  for (std::size_t t = std::min(s1, s2); t < std::max(e1, e2); ++t) {
    if (t >= s1 && t < e1 && t >= s2 && t < e2) ++inter;
  }
  const std::size_t uni = (e1 - s1) + (e2 - s2) - inter;
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// Repeatedly takes the best remaining detection and discards everything
/// overlapping it at or above the threshold.
inline std::vector<Detection> nms(std::vector<Detection> pool, double threshold) {
  std::vector<Detection> kept;
  while (!pool.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const auto& a = pool[i];
      const auto& b = pool[best];
      const bool better = a.score > b.score ||
                          (a.score == b.score && (a.start < b.start ||
                                                  (a.start == b.start && a.length() < b.length())));
      if (better) best = i;
    }
    const Detection top = pool[best];
    kept.push_back(top);
    std::vector<Detection> rest;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (i == best) continue;
      if (interval_iou(pool[i].start, pool[i].end, top.start, top.end) < threshold) rest.push_back(pool[i]);
    }
    pool = std::move(rest);
  }
  return kept;
}

/// AP as (1/#gt) * sum over true-positive ranks k of the best precision
/// reached at any rank j >= k. Ranking: score descending, input order on ties.
inline std::optional<double> average_precision(const std::vector<VideoDetection>& dets,
                                               const std::vector<GroundTruthSegment>& gts,
                                               double thr) {
  if (gts.empty()) return std::nullopt;
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].det.score != dets[b].det.score) return dets[a].det.score > dets[b].det.score;
    return a < b;
  });
  std::vector<bool> taken(gts.size(), false);
  std::vector<bool> hit(order.size(), false);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& d = dets[order[r]];
    std::optional<std::size_t> pick;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].video_id != d.video_id) continue;
      const double ov = interval_iou(d.det.start, d.det.end, gts[g].start, gts[g].end);
      if (ov < thr) continue;
      if (!pick || ov > interval_iou(d.det.start, d.det.end, gts[*pick].start, gts[*pick].end)) pick = g;
    }
    if (pick) {
      taken[*pick] = true;
      hit[r] = true;
    }
  }
  std::vector<double> precision(order.size());
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (hit[r]) ++tp;
    precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
  }
  double ap = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!hit[k]) continue;
    ap += *std::max_element(precision.begin() + static_cast<std::ptrdiff_t>(k), precision.end());
  }
  return ap / static_cast<double>(gts.size());
}

}  // namespace acsloc::reference
