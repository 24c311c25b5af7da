#pragma once

// Training objectives and the hand-written backward pass through both
// branches. Index-set selections and the smoothed attention target are
// treated as constants: no gradient flows through them.

#include <cmath>
#include <optional>
#include <vector>

#include "acsloc/model.hpp"
#include "acsloc/numcore.hpp"

namespace acsloc {

inline constexpr double kLogClamp = 1e-7;

// ---------------------------------------------------------------------------
// Classification targets

/// Foreground target for the FB branch: the multi-hot label with the
/// background entry cleared, normalized to sum to one.
inline std::vector<double> fb_foreground_target(const VideoLabel& label) {
  std::vector<double> target(label.num_classes + 1, 0.0);
  double total = 0.0;
  for (std::size_t n = 1; n <= label.num_classes; ++n) {
    target[n] = label.y[n];
    total += label.y[n];
  }
  if (total <= 0.0) throw ContractError("fb_foreground_target: label has no action class");
  for (double& v : target) v /= total;
  return target;
}

inline std::vector<double> fb_background_target(std::size_t num_classes) {
  std::vector<double> target(num_classes + 1, 0.0);
  target[0] = 1.0;
  return target;
}

struct ACTargets {
  std::vector<double> fg, action, context;  // each 2N, sums to 1
};

/// fg splits each contained class evenly between its action and context
/// entries; action/context targets put all mass on their own half.
inline ACTargets ac_targets(const VideoLabel& label) {
  const std::size_t N = label.num_classes;
  const auto ext = extend_label(label);
  ACTargets t{std::vector<double>(2 * N, 0.0), std::vector<double>(2 * N, 0.0),
              std::vector<double>(2 * N, 0.0)};
  double k = 0.0;
  for (std::size_t n = 0; n < N; ++n) k += ext[n];
  if (k <= 0.0) throw ContractError("ac_targets: label has no action class");
  for (std::size_t n = 0; n < N; ++n) {
    if (ext[n] <= 0.0) continue;
    t.fg[n] = 0.5 / k;
    t.fg[N + n] = 0.5 / k;
    t.action[n] = 1.0 / k;
    t.context[N + n] = 1.0 / k;
  }
  return t;
}

inline double fb_classification_loss(const FBOutputs& fb, const VideoLabel& label) {
  const auto fg = fb_foreground_target(label);
  const auto bg = fb_background_target(label.num_classes);
  double loss = 0.0;
  for (const FBStreamOutputs* s : {&fb.rgb, &fb.flow}) {
    loss += softmax_cross_entropy(s->p_fg, fg).loss;
    loss += softmax_cross_entropy(s->p_bg, bg).loss;
  }
  return loss;
}

inline double ac_classification_loss(std::span<const double> pred_fg,
                                     std::span<const double> pred_a,
                                     std::span<const double> pred_c, const VideoLabel& label) {
  const auto t = ac_targets(label);
  return softmax_cross_entropy(pred_fg, t.fg).loss + softmax_cross_entropy(pred_a, t.action).loss +
         softmax_cross_entropy(pred_c, t.context).loss;
}

// ---------------------------------------------------------------------------
// Weighted binary logistic regression

struct LogisticResult {
  double loss = 0.0;
  std::vector<double> grad;  // dloss/dp
};

/// Class-balanced logistic loss. An empty positive or negative side drops
/// its term. Probabilities are clamped to [1e-7, 1-1e-7] before the logs.
inline LogisticResult weighted_logistic_with_grad(std::span<const double> p,
                                                  std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("weighted_logistic: length mismatch");
  double npos = 0.0, nneg = 0.0;
  for (double v : q) {
    npos += v;
    nneg += 1.0 - v;
  }
  LogisticResult out;
  out.grad.assign(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool clamped = p[i] < kLogClamp || p[i] > 1.0 - kLogClamp;
    const double pc = std::clamp(p[i], kLogClamp, 1.0 - kLogClamp);
    if (q[i] > 0.0 && npos > 0.0) {
      out.loss -= q[i] * std::log(pc) / npos;
      if (!clamped) out.grad[i] -= q[i] / (npos * pc);
    }
    if (q[i] < 1.0 && nneg > 0.0) {
      out.loss -= (1.0 - q[i]) * std::log(1.0 - pc) / nneg;
      if (!clamped) out.grad[i] += (1.0 - q[i]) / (nneg * (1.0 - pc));
    }
  }
  return out;
}

inline double weighted_logistic(std::span<const double> p, std::span<const double> q) {
  return weighted_logistic_with_grad(p, q).loss;
}

// ---------------------------------------------------------------------------
// Guidance

struct GuidanceSets {
  std::vector<std::size_t> pos_action, neg_action, pos_context, neg_context;

  bool operator==(const GuidanceSets&) const = default;
};

/// Action positives/negatives are snippets where both streams agree on a
/// high/low action attention; context positives are high in rgb but low in
/// flow; context negatives are the union of the action sets.
inline GuidanceSets build_guidance_sets(std::span<const double> att_a_rgb,
                                        std::span<const double> att_a_flow, double theta_h,
                                        double theta_l) {
  if (att_a_rgb.size() != att_a_flow.size()) throw DimensionError("guidance sets: length mismatch");
  if (!(theta_l < theta_h)) throw ContractError("guidance sets: require theta_l < theta_h");
  GuidanceSets s;
  for (std::size_t t = 0; t < att_a_rgb.size(); ++t) {
    const double r = att_a_rgb[t];
    const double f = att_a_flow[t];
    const bool pa = r > theta_h && f > theta_h;
    const bool na = r < theta_l && f < theta_l;
    if (pa) s.pos_action.push_back(t);
    if (na) s.neg_action.push_back(t);
    if (r > theta_h && f < theta_l) s.pos_context.push_back(t);
    if (pa || na) s.neg_context.push_back(t);
  }
  return s;
}

struct GuidanceResult {
  double loss = 0.0;
  std::vector<double> grad_action, grad_context;  // T each
};

inline GuidanceResult guidance_loss_with_grad(std::span<const double> att_a,
                                              std::span<const double> att_c,
                                              const GuidanceSets& sets) {
  GuidanceResult out;
  out.grad_action.assign(att_a.size(), 0.0);
  out.grad_context.assign(att_c.size(), 0.0);
  auto term = [&](std::span<const double> att, const std::vector<std::size_t>& pos,
                  const std::vector<std::size_t>& neg, std::vector<double>& grad) {
    if (pos.empty() && neg.empty()) return;
    std::vector<double> p, q;
    std::vector<std::size_t> idx;
    for (std::size_t t : pos) {
      p.push_back(att[t]);
      q.push_back(1.0);
      idx.push_back(t);
    }
    for (std::size_t t : neg) {
      p.push_back(att[t]);
      q.push_back(0.0);
      idx.push_back(t);
    }
    const auto r = weighted_logistic_with_grad(p, q);
    out.loss += r.loss;
    for (std::size_t i = 0; i < idx.size(); ++i) grad[idx[i]] += r.grad[i];
  };
  term(att_a, sets.pos_action, sets.neg_action, out.grad_action);
  term(att_c, sets.pos_context, sets.neg_context, out.grad_context);
  return out;
}

inline double guidance_loss(std::span<const double> att_a, std::span<const double> att_c,
                            const GuidanceSets& sets) {
  return guidance_loss_with_grad(att_a, att_c, sets).loss;
}

// ---------------------------------------------------------------------------
// Smoothed attention consistency

struct GaussianSmoothing {
  double sigma = 2.0;
  std::size_t radius = 6;
};

/// Half-sample symmetric ("reflect") index into [0, T).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t T) {
  const auto period = static_cast<std::ptrdiff_t>(2 * T);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(T)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

inline std::vector<double> gaussian_kernel(const GaussianSmoothing& g) {
  std::vector<double> k(2 * g.radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(g.radius);
    k[i] = std::exp(-x * x / (2.0 * g.sigma * g.sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

inline std::vector<double> gaussian_smooth(std::span<const double> seq,
                                           const GaussianSmoothing& g = {}) {
  const std::size_t T = seq.size();
  std::vector<double> out(T, 0.0);
  if (T == 0) return out;
  const auto k = gaussian_kernel(g);
  const auto r = static_cast<std::ptrdiff_t>(g.radius);
  for (std::size_t t = 0; t < T; ++t) {
    double acc = 0.0;
    for (std::ptrdiff_t j = -r; j <= r; ++j) {
      acc += k[static_cast<std::size_t>(j + r)] *
             seq[reflect_index(static_cast<std::ptrdiff_t>(t) + j, T)];
    }
    out[t] = acc;
  }
  return out;
}

/// Mean squared error between the fused AC foreground attention and an
/// already-smoothed target.
inline double mse_to_target(std::span<const double> att_fg, std::span<const double> target) {
  if (att_fg.size() != target.size()) throw DimensionError("mse_loss: length mismatch");
  if (att_fg.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 0; t < att_fg.size(); ++t) {
    const double d = att_fg[t] - target[t];
    acc += d * d;
  }
  return acc / static_cast<double>(att_fg.size());
}

inline double mse_loss(std::span<const double> att_fg, std::span<const double> sap,
                       const GaussianSmoothing& g = {}) {
  return mse_to_target(att_fg, gaussian_smooth(sap, g));
}

// ---------------------------------------------------------------------------
// Total

struct LossBreakdown {
  double l_cls_fb = 0.0;
  double l_cls_ac = 0.0;
  double l_g = 0.0;
  double l_mse = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    l_cls_fb += o.l_cls_fb;
    l_cls_ac += o.l_cls_ac;
    l_g += o.l_g;
    l_mse += o.l_mse;
    total += o.total;
    return *this;
  }
  bool operator==(const LossBreakdown&) const = default;
};

inline LossBreakdown total_loss(double l_cls_fb, double l_cls_ac, double l_g, double l_mse,
                                double lambda) {
  if (lambda < 0.0) throw ContractError("total_loss: lambda must be non-negative");
  return {l_cls_fb, l_cls_ac, l_g, l_mse, l_cls_fb + l_cls_ac + lambda * (l_mse + l_g)};
}

/// Per-component multipliers. Disabled components are still computed and
/// reported; they only stop contributing to `total` and the gradient.
struct LossWeights {
  double lambda = 1.0;
  bool use_fb = true;
  bool use_ac = true;
  bool use_guidance = true;
  bool use_mse = true;
  GaussianSmoothing smoothing{};

  double fb() const { return use_fb ? 1.0 : 0.0; }
  double ac() const { return use_ac ? 1.0 : 0.0; }
  double g() const { return use_guidance ? lambda : 0.0; }
  double mse() const { return use_mse ? lambda : 0.0; }
};

/// Non-differentiable selections made from one forward pass. Passing them
/// back in pins them while parameters are perturbed.
struct FrozenSelections {
  IndexSet fg_index;
  GuidanceSets guidance;
  std::vector<double> smoothed_sap;
};

struct VideoObjective {
  LossBreakdown parts;
  FrozenSelections selections;
};

namespace detail {

inline void sigmoid_backward_into(std::span<const double> y, std::span<const double> gy,
                                  std::span<double> gx) {
  for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * y[i] * (1.0 - y[i]);
}

inline void latent_backward(const Tensor2D& F, const LayerParams& conv1, const LayerParams& conv2,
                            const LatentOutputs& lat, std::span<const double> grad_value,
                            LayerParams& g1, LayerParams& g2) {
  const std::size_t T = F.cols();
  Tensor2D g_out(1, T);
  sigmoid_backward_into(lat.value, grad_value, g_out.flat());
  Tensor2D g_hidden(lat.hidden.rows(), T);
  temporal_conv_backward(lat.hidden, conv2, g_out, g2, &g_hidden);
  auto gh = g_hidden.flat();
  auto h = lat.hidden.flat();
  for (std::size_t i = 0; i < gh.size(); ++i) {
    if (!(h[i] > 0.0)) gh[i] = 0.0;
  }
  temporal_conv_backward(F, conv1, g_hidden, g1, nullptr);
}

inline void fb_stream_backward(const Tensor2D& F, const StreamParams& sp,
                               const FBStreamOutputs& out, std::span<const double> g_pfg,
                               std::span<const double> g_pbg, StreamParams& grad) {
  const std::size_t T = F.cols();
  const auto g_ffg = fully_connected_backward(out.f_fg, sp.classifier, g_pfg, grad.classifier);
  const auto g_fbg = fully_connected_backward(out.f_bg, sp.classifier, g_pbg, grad.classifier);
  const double inv_t = 1.0 / static_cast<double>(T);
  Tensor2D g_pre(1, T);
  for (std::size_t t = 0; t < T; ++t) {
    double gs = 0.0;
    for (std::size_t d = 0; d < F.rows(); ++d) gs += F(d, t) * (g_ffg[d] - g_fbg[d]);
    gs *= inv_t;
    g_pre(0, t) = gs * out.sap[t] * (1.0 - out.sap[t]);
  }
  fully_connected_backward(F, sp.attention, g_pre, grad.attention, nullptr);
}

inline void ac_stream_backward(const Tensor2D& F, const StreamParams& sp,
                               const ACStreamOutputs& out, std::span<const double> g_fg,
                               std::span<const double> g_a, std::span<const double> g_c,
                               StreamParams& grad) {
  const std::size_t T = F.cols();
  std::vector<double> g_pos(T, 0.0), g_neg(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double u_fg = g_fg[t] * out.att.fg[t] * (1.0 - out.att.fg[t]);
    const double u_a = g_a[t] * out.att.action[t] * (1.0 - out.att.action[t]);
    const double u_c = g_c[t] * out.att.context[t] * (1.0 - out.att.context[t]);
    g_pos[t] = u_fg + u_a - u_c;
    g_neg[t] = u_fg + u_c;
  }
  latent_backward(F, sp.pos_conv1, sp.pos_conv2, out.pos, g_pos, grad.pos_conv1, grad.pos_conv2);
  latent_backward(F, sp.neg_conv1, sp.neg_conv2, out.neg, g_neg, grad.neg_conv1, grad.neg_conv2);
}

}  // namespace detail

/// Loss of one video and, when `grad` is non-null, accumulation of its
/// gradient into `grad`. `frozen` pins the non-differentiable selections.
inline VideoObjective video_objective(const ModelParams& params, const StreamFeatures& features,
                                      const VideoLabel& label, const LossWeights& weights,
                                      ModelParams* grad = nullptr,
                                      const FrozenSelections* frozen = nullptr) {
  const auto& hp = params.hyper;
  const double alpha = hp.alpha;
  const std::size_t T = features.length();
  VideoObjective result;

  // FB branch.
  const FBOutputs fb = fb_forward(features, params);
  const auto fg_target = fb_foreground_target(label);
  const auto bg_target = fb_background_target(label.num_classes);
  const auto ce_rgb_fg = softmax_cross_entropy(fb.rgb.p_fg, fg_target);
  const auto ce_rgb_bg = softmax_cross_entropy(fb.rgb.p_bg, bg_target);
  const auto ce_flow_fg = softmax_cross_entropy(fb.flow.p_fg, fg_target);
  const auto ce_flow_bg = softmax_cross_entropy(fb.flow.p_bg, bg_target);
  const double l_fb = ce_rgb_fg.loss + ce_rgb_bg.loss + ce_flow_fg.loss + ce_flow_bg.loss;

  // AC branch.
  FrozenSelections sel;
  if (frozen) {
    sel = *frozen;
  } else {
    sel.fg_index = foreground_index_set(fb.sap);
    sel.smoothed_sap = gaussian_smooth(fb.sap, weights.smoothing);
  }
  const ACOutputs ac = ac_forward(features, fb.sap, params, &sel.fg_index);
  if (!frozen) {
    sel.guidance = build_guidance_sets(ac.rgb.att.action, ac.flow.att.action,
                                       action_attention_threshold(hp.theta_h),
                                       action_attention_threshold(hp.theta_l));
  }
  const auto targets = ac_targets(label);
  const auto ce_fg = softmax_cross_entropy(ac.pred.pred_fg, targets.fg);
  const auto ce_a = softmax_cross_entropy(ac.pred.pred_a, targets.action);
  const auto ce_c = softmax_cross_entropy(ac.pred.pred_c, targets.context);
  const double l_ac = ce_fg.loss + ce_a.loss + ce_c.loss;
  const auto gl = guidance_loss_with_grad(ac.att.action, ac.att.context, sel.guidance);
  const double l_mse = mse_to_target(ac.att.fg, sel.smoothed_sap);

  result.parts = {l_fb, l_ac, gl.loss, l_mse,
                  weights.fb() * l_fb + weights.ac() * l_ac + weights.g() * gl.loss +
                      weights.mse() * l_mse};
  result.selections = std::move(sel);
  if (!grad) return result;

  // FB backward.
  const double wf = weights.fb();
  if (wf != 0.0) {
    auto scaled = [wf](const std::vector<double>& g) {
      std::vector<double> out(g);
      for (double& v : out) v *= wf;
      return out;
    };
    detail::fb_stream_backward(features.rgb, params.rgb, fb.rgb, scaled(ce_rgb_fg.grad),
                               scaled(ce_rgb_bg.grad), grad->rgb);
    detail::fb_stream_backward(features.flow, params.flow, fb.flow, scaled(ce_flow_fg.grad),
                               scaled(ce_flow_bg.grad), grad->flow);
  }

  // AC backward: gradients w.r.t. the fused attentions first.
  std::vector<double> g_fg(T, 0.0), g_a(T, 0.0), g_c(T, 0.0);
  const double wa = weights.ac();
  if (wa != 0.0) {
    const auto& m = params.ac_classifier;
    const auto& I = result.selections.fg_index.indices;
    const double inv = 1.0 / static_cast<double>(I.size());
    auto pooled_branch = [&](const std::vector<double>& pooled, const std::vector<double>& g_logits,
                             std::vector<double>& g_att) {
      std::vector<double> gl_scaled(g_logits);
      for (double& v : gl_scaled) v *= wa;
      const auto g_pooled = fully_connected_backward(pooled, m, gl_scaled, grad->ac_classifier);
      for (std::size_t t : I) {
        double acc = 0.0;
        for (std::size_t r = 0; r < g_pooled.size(); ++r) acc += g_pooled[r] * features.concat(r, t);
        g_att[t] += acc * inv;
      }
    };
    pooled_branch(ac.pred.pooled_fg, ce_fg.grad, g_fg);
    pooled_branch(ac.pred.pooled_a, ce_a.grad, g_a);
    pooled_branch(ac.pred.pooled_c, ce_c.grad, g_c);
  }
  const double wg = weights.g();
  if (wg != 0.0) {
    for (std::size_t t = 0; t < T; ++t) {
      g_a[t] += wg * gl.grad_action[t];
      g_c[t] += wg * gl.grad_context[t];
    }
  }
  const double wm = weights.mse();
  if (wm != 0.0 && T > 0) {
    for (std::size_t t = 0; t < T; ++t) {
      g_fg[t] += wm * 2.0 * (ac.att.fg[t] - result.selections.smoothed_sap[t]) /
                 static_cast<double>(T);
    }
  }
  auto scale = [](const std::vector<double>& g, double s) {
    std::vector<double> out(g);
    for (double& v : out) v *= s;
    return out;
  };
  detail::ac_stream_backward(features.rgb, params.rgb, ac.rgb, scale(g_fg, alpha),
                             scale(g_a, alpha), scale(g_c, alpha), grad->rgb);
  detail::ac_stream_backward(features.flow, params.flow, ac.flow, scale(g_fg, 1.0 - alpha),
                             scale(g_a, 1.0 - alpha), scale(g_c, 1.0 - alpha), grad->flow);
  return result;
}

}  // namespace acsloc
