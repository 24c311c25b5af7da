#pragma once

// Proposal generation, outer-inner-contrastive scoring, class selection,
// NMS and the ablation variant presets.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "acsloc/model.hpp"
#include "acsloc/numcore.hpp"

namespace acsloc {

enum class ProposalSource { P1, P2, P3 };

/// Snippet span [start, end), 0-based.
struct Proposal {
  std::size_t start = 0;
  std::size_t end = 0;
  ProposalSource source = ProposalSource::P1;
  std::optional<int> cls;  // set for class-specific (P3) proposals

  bool operator==(const Proposal&) const = default;
};

struct Detection {
  int cls = 0;  // 1-based
  std::size_t start = 0;
  std::size_t end = 0;
  double score = 0.0;

  std::size_t length() const { return end - start; }
  bool operator==(const Detection&) const = default;
};

enum class Scoring { S1, S2 };

struct VariantConfig {
  bool use_p1 = false;
  bool use_p2 = true;
  bool use_p3 = true;
  Scoring scoring = Scoring::S2;
  double nms_tiou = 0.5;
  double action_threshold = action_attention_threshold(0.5);  // P2 cut on fused action attention

  void validate() const {
    if (!use_p1 && !use_p2 && !use_p3) throw ConfigError("variant: no proposal source enabled");
    if (!(nms_tiou > 0.0 && nms_tiou <= 1.0)) throw ConfigError("variant: nms_tiou outside (0,1]");
  }
};

/// Presets #0..#5: {P1,S1} {P2,S1} {P2,S2} {P3,S2} {P2,P3,S2} {P1,P2,P3,S2}.
inline VariantConfig variant_preset(int id, double nms_tiou = 0.5) {
  VariantConfig v;
  v.nms_tiou = nms_tiou;
  switch (id) {
    case 0: v.use_p1 = true;  v.use_p2 = false; v.use_p3 = false; v.scoring = Scoring::S1; break;
    case 1: v.use_p1 = false; v.use_p2 = true;  v.use_p3 = false; v.scoring = Scoring::S1; break;
    case 2: v.use_p1 = false; v.use_p2 = true;  v.use_p3 = false; v.scoring = Scoring::S2; break;
    case 3: v.use_p1 = false; v.use_p2 = false; v.use_p3 = true;  v.scoring = Scoring::S2; break;
    case 4: v.use_p1 = false; v.use_p2 = true;  v.use_p3 = true;  v.scoring = Scoring::S2; break;
    case 5: v.use_p1 = true;  v.use_p2 = true;  v.use_p3 = true;  v.scoring = Scoring::S2; break;
    default: throw ConfigError("variant must be in 0..5, got " + std::to_string(id));
  }
  return v;
}

/// Maximal runs of consecutive snippets strictly above `threshold`.
inline std::vector<Proposal> threshold_proposals(std::span<const double> seq, double threshold,
                                                 ProposalSource source = ProposalSource::P1,
                                                 std::optional<int> cls = std::nullopt) {
  std::vector<Proposal> out;
  std::size_t t = 0;
  while (t < seq.size()) {
    if (!(seq[t] > threshold)) {
      ++t;
      continue;
    }
    std::size_t e = t;
    while (e < seq.size() && seq[e] > threshold) ++e;
    out.push_back({t, e, source, cls});
    t = e;
  }
  return out;
}

inline std::vector<Proposal> mask_proposals(const std::vector<bool>& mask,
                                            ProposalSource source = ProposalSource::P1) {
  std::vector<double> seq(mask.size());
  for (std::size_t t = 0; t < mask.size(); ++t) seq[t] = mask[t] ? 1.0 : 0.0;
  return threshold_proposals(seq, 0.5, source);
}

/// Inflation length of the outer window: max(1, round(len / 4)).
inline std::size_t oic_inflation(std::size_t length) {
  const auto tau = std::lround(static_cast<double>(length) / 4.0);
  return static_cast<std::size_t>(std::max<long>(1, tau));
}

/// Inner mean minus the mean of the flanking outer window, clipped to the
/// video. An empty outer window scores the inner mean.
inline double oic_score(std::size_t start, std::size_t end, std::span<const double> v) {
  if (!(end > start) || end > v.size()) throw ContractError("oic_score: invalid proposal span");
  double inner = 0.0;
  for (std::size_t t = start; t < end; ++t) inner += v[t];
  inner /= static_cast<double>(end - start);
  const std::size_t tau = oic_inflation(end - start);
  const std::size_t lo = start >= tau ? start - tau : 0;
  const std::size_t hi = std::min(v.size(), end + tau);
  double outer = 0.0;
  std::size_t count = 0;
  for (std::size_t t = lo; t < start; ++t, ++count) outer += v[t];
  for (std::size_t t = end; t < hi; ++t, ++count) outer += v[t];
  if (count == 0) return inner;
  return inner - outer / static_cast<double>(count);
}

inline double oic_score(const Proposal& p, std::span<const double> v) {
  return oic_score(p.start, p.end, v);
}

/// Per-snippet softmax of the (N+1)-row SCP matrix.
inline Tensor2D softmax_columns(const Tensor2D& logits) {
  Tensor2D out(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < logits.cols(); ++t) {
    const auto q = softmax(logits.column(t));
    for (std::size_t r = 0; r < q.size(); ++r) out(r, t) = q[r];
  }
  return out;
}

/// v1 = softmax(scp)(n,:); v2 = v1 + offset(n,:). `cls` is 1-based.
inline std::vector<double> corrected_sequence(const Tensor2D& scp_prob, const Tensor2D& offset,
                                              int cls, Scoring scoring) {
  const auto n = static_cast<std::size_t>(cls);
  if (cls < 1 || n >= scp_prob.rows() || n > offset.rows()) {
    throw ContractError("corrected_sequence: class " + std::to_string(cls) + " out of range");
  }
  std::vector<double> v(scp_prob.row(n).begin(), scp_prob.row(n).end());
  if (scoring == Scoring::S2) {
    for (std::size_t t = 0; t < v.size(); ++t) v[t] += offset(n - 1, t);
  }
  return v;
}

/// Softmax over the action classes (background excluded); keeps every class
/// with probability >= 0.1 * max, which always includes the argmax.
inline std::vector<int> select_video_classes(std::span<const double> p_fg) {
  if (p_fg.size() < 2) throw DimensionError("select_video_classes: need N+1 >= 2 logits");
  const auto prob = softmax(p_fg.subspan(1));
  const double mx = *std::max_element(prob.begin(), prob.end());
  std::vector<int> out;
  for (std::size_t n = 0; n < prob.size(); ++n) {
    if (prob[n] >= 0.1 * mx) out.push_back(static_cast<int>(n + 1));
  }
  return out;
}

inline double tiou(std::size_t s1, std::size_t e1, std::size_t s2, std::size_t e2) {
  const std::size_t lo = std::max(s1, s2);
  const std::size_t hi = std::min(e1, e2);
  const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
  const double uni = static_cast<double>(e1 - s1) + static_cast<double>(e2 - s2) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline bool nms_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return a.length() < b.length();
}

/// Greedy suppression; a detection survives iff its tIoU with every kept
/// one is below the threshold.
inline std::vector<Detection> nms(std::vector<Detection> dets, double tiou_threshold) {
  std::stable_sort(dets.begin(), dets.end(), nms_before);
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool keep = true;
    for (const auto& k : kept) {
      if (tiou(d.start, d.end, k.start, k.end) >= tiou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(d);
  }
  return kept;
}

/// The per-video quantities localization consumes.
struct LocalizationInputs {
  std::vector<double> sap;       // fused FB attention, T
  std::vector<double> att_a;     // fused AC action attention, T
  Tensor2D scp;                  // fused SCP logits, (N+1) x T
  Tensor2D offset;               // N x T
  std::vector<double> p_fg;      // fused video-level logits, N+1
};

inline LocalizationInputs localization_inputs(const ModelOutputs& out) {
  return {out.fb.sap, out.ac.att.action, out.fb.scp, out.ac.offset, out.fb.p_fg};
}

/// Proposals from every enabled source before scoring. Class-agnostic
/// proposals carry no class; P3 proposals are produced for `classes` only.
inline std::vector<Proposal> collect_proposals(const LocalizationInputs& in,
                                               const VariantConfig& cfg,
                                               const std::vector<int>& classes) {
  std::vector<Proposal> out;
  if (cfg.use_p1) {
    auto p = threshold_proposals(in.sap, 0.5, ProposalSource::P1);
    out.insert(out.end(), p.begin(), p.end());
  }
  if (cfg.use_p2) {
    auto p = threshold_proposals(in.att_a, cfg.action_threshold, ProposalSource::P2);
    out.insert(out.end(), p.begin(), p.end());
  }
  if (cfg.use_p3) {
    for (int n : classes) {
      auto p = threshold_proposals(in.offset.row(static_cast<std::size_t>(n - 1)), 0.0,
                                   ProposalSource::P3, n);
      out.insert(out.end(), p.begin(), p.end());
    }
  }
  return out;
}

/// Scores proposals per selected class and applies per-class NMS. Output
/// is ordered by class, then by start snippet.
inline std::vector<Detection> generate_detections(const LocalizationInputs& in,
                                                  const VariantConfig& cfg) {
  cfg.validate();
  const auto classes = select_video_classes(in.p_fg);
  const auto proposals = collect_proposals(in, cfg, classes);
  const Tensor2D prob = softmax_columns(in.scp);
  std::vector<Detection> out;
  for (int n : classes) {
    const auto v = corrected_sequence(prob, in.offset, n, cfg.scoring);
    std::vector<Detection> cand;
    for (const auto& p : proposals) {
      if (p.cls && *p.cls != n) continue;
      cand.push_back({n, p.start, p.end, oic_score(p, v)});
    }
    auto kept = nms(std::move(cand), cfg.nms_tiou);
    std::ranges::stable_sort(kept, {}, &Detection::start);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

inline std::vector<Detection> generate_detections(const ModelOutputs& out,
                                                  const VariantConfig& cfg) {
  return generate_detections(localization_inputs(out), cfg);
}

/// Scores externally supplied class-agnostic proposals with v1 (snippet-set
/// diagnostics).
inline std::vector<Detection> score_agnostic_proposals(const LocalizationInputs& in,
                                                       const std::vector<Proposal>& proposals,
                                                       double nms_tiou) {
  const auto classes = select_video_classes(in.p_fg);
  const Tensor2D prob = softmax_columns(in.scp);
  std::vector<Detection> out;
  for (int n : classes) {
    const auto v = corrected_sequence(prob, in.offset, n, Scoring::S1);
    std::vector<Detection> cand;
    for (const auto& p : proposals) cand.push_back({n, p.start, p.end, oic_score(p, v)});
    auto kept = nms(std::move(cand), nms_tiou);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

}  // namespace acsloc
