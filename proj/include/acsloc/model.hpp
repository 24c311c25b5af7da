#pragma once

// Two-branch action localization model: a foreground-background (FB) branch
// built on class-agnostic snippet attention, and an action-context (AC)
// branch that splits the foreground with a positive and a negative latent
// component per stream.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acsloc/numcore.hpp"

namespace acsloc {

/// Video-level label. y[0] is the background flag, y[n] = 1 when the video
/// contains action class n (1-based).
struct VideoLabel {
  std::size_t num_classes = 0;
  std::vector<double> y;

  static VideoLabel from_classes(std::size_t num_classes, const std::vector<int>& classes) {
    VideoLabel label{num_classes, std::vector<double>(num_classes + 1, 0.0)};
    for (int c : classes) {
      if (c < 1 || static_cast<std::size_t>(c) > num_classes) {
        throw ContractError("VideoLabel: class " + std::to_string(c) + " outside [1," +
                            std::to_string(num_classes) + "]");
      }
      label.y[static_cast<std::size_t>(c)] = 1.0;
    }
    return label;
  }

  std::vector<int> classes() const {
    std::vector<int> out;
    for (std::size_t n = 1; n <= num_classes; ++n) {
      if (y[n] > 0.5) out.push_back(static_cast<int>(n));
    }
    return out;
  }

  bool has_action() const { return !classes().empty(); }
};

/// Extended label laid out as [action 1..N | context 1..N]; the context
/// entry of a class mirrors its action membership. The background bit is dropped.
inline std::vector<double> extend_label(const VideoLabel& label) {
  const std::size_t N = label.num_classes;
  std::vector<double> out(2 * N, 0.0);
  for (std::size_t n = 1; n <= N; ++n) {
    out[n - 1] = label.y[n];
    out[N + n - 1] = label.y[n];
  }
  return out;
}

struct StreamFeatures {
  Tensor2D rgb;     // D x T
  Tensor2D flow;    // D x T
  Tensor2D concat;  // 2D x T, rgb rows first

  std::size_t dim() const { return rgb.rows(); }
  std::size_t length() const { return rgb.cols(); }
};

inline StreamFeatures make_stream_features(Tensor2D rgb, Tensor2D flow) {
  if (rgb.rows() != flow.rows() || rgb.cols() != flow.cols()) {
    throw DimensionError("StreamFeatures: rgb " + std::to_string(rgb.rows()) + "x" +
                         std::to_string(rgb.cols()) + " vs flow " + std::to_string(flow.rows()) +
                         "x" + std::to_string(flow.cols()));
  }
  const std::size_t D = rgb.rows();
  const std::size_t T = rgb.cols();
  Tensor2D concat(2 * D, T);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t t = 0; t < T; ++t) {
      concat(d, t) = rgb(d, t);
      concat(D + d, t) = flow(d, t);
    }
  }
  return {std::move(rgb), std::move(flow), std::move(concat)};
}

struct ModelHyper {
  std::size_t num_classes = 4;
  std::size_t feature_dim = 32;
  std::size_t hidden = 64;
  std::size_t kernel_size = 3;
  double alpha = 0.5;
  double theta_h = 0.7;
  double theta_l = 0.3;

  void validate() const {
    if (num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
    if (feature_dim < 1) throw ConfigError("model: feature_dim must be >= 1");
    if (hidden < 1) throw ConfigError("model: hidden must be >= 1");
    if (kernel_size % 2 == 0) throw ConfigError("model: kernel_size must be odd");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("model: alpha must lie in [0,1]");
    if (!(theta_l > 0.0 && theta_h < 1.0 && theta_l < theta_h)) {
      throw ConfigError("model: require 0 < theta_l < theta_h < 1");
    }
  }

  bool operator==(const ModelHyper&) const = default;
};

struct StreamParams {
  LayerParams attention;   // D -> 1, sigmoid
  LayerParams classifier;  // D -> N+1
  LayerParams pos_conv1;   // D -> H, relu
  LayerParams pos_conv2;   // H -> 1, sigmoid
  LayerParams neg_conv1;
  LayerParams neg_conv2;

  bool operator==(const StreamParams&) const = default;
};

struct ModelParams {
  ModelHyper hyper;
  StreamParams rgb;
  StreamParams flow;
  LayerParams ac_classifier;  // 2D -> 2N, shared by both streams

  bool operator==(const ModelParams&) const = default;
};

/// Visits every trainable block in a fixed order with a stable name.
template <class Params, class Fn>
void for_each_block(Params& params, Fn&& fn) {
  auto layer = [&](const std::string& name, auto& l) {
    fn(name + ".weight", l.weights.flat());
    fn(name + ".bias", std::span(l.bias));
  };
  auto stream = [&](const std::string& s, auto& sp) {
    layer(s + ".attention", sp.attention);
    layer(s + ".classifier", sp.classifier);
    layer(s + ".pos_conv1", sp.pos_conv1);
    layer(s + ".pos_conv2", sp.pos_conv2);
    layer(s + ".neg_conv1", sp.neg_conv1);
    layer(s + ".neg_conv2", sp.neg_conv2);
  };
  stream("rgb", params.rgb);
  stream("flow", params.flow);
  layer("ac_classifier", params.ac_classifier);
}

inline ModelParams make_model(const ModelHyper& hyper) {
  hyper.validate();
  const std::size_t D = hyper.feature_dim;
  const std::size_t N = hyper.num_classes;
  auto stream = [&] {
    return StreamParams{make_fully_connected(D, 1),
                        make_fully_connected(D, N + 1),
                        make_temporal_conv(D, hyper.hidden, hyper.kernel_size),
                        make_temporal_conv(hyper.hidden, 1, hyper.kernel_size),
                        make_temporal_conv(D, hyper.hidden, hyper.kernel_size),
                        make_temporal_conv(hyper.hidden, 1, hyper.kernel_size)};
  };
  return {hyper, stream(), stream(), make_fully_connected(2 * D, 2 * N)};
}

/// Uniform fan-in initialization of all weights and biases; every block
/// draws from its own stream derived from (seed, block name).
inline ModelParams init_model(const ModelHyper& hyper, std::uint64_t seed) {
  ModelParams params = make_model(hyper);
  auto init_layer = [&](const std::string& name, LayerParams& l) {
    const std::size_t fan_in = l.fan_in();
    l.weights = seeded_init(l.weights.rows(), l.weights.cols(),
                            mix_seed(seed, hash_tag(name + ".weight")), InitScheme::UniformFanIn,
                            fan_in);
    Tensor2D b = seeded_init(l.bias.size(), 1, mix_seed(seed, hash_tag(name + ".bias")),
                             InitScheme::UniformFanIn, fan_in);
    l.bias.assign(b.data().begin(), b.data().end());
  };
  auto stream = [&](const std::string& s, StreamParams& sp) {
    init_layer(s + ".attention", sp.attention);
    init_layer(s + ".classifier", sp.classifier);
    init_layer(s + ".pos_conv1", sp.pos_conv1);
    init_layer(s + ".pos_conv2", sp.pos_conv2);
    init_layer(s + ".neg_conv1", sp.neg_conv1);
    init_layer(s + ".neg_conv2", sp.neg_conv2);
  };
  stream("rgb", params.rgb);
  stream("flow", params.flow);
  init_layer("ac_classifier", params.ac_classifier);
  return params;
}

inline ModelParams zeros_like(const ModelParams& p) {
  auto stream = [](const StreamParams& s) {
    return StreamParams{zeros_like(s.attention), zeros_like(s.classifier),
                        zeros_like(s.pos_conv1), zeros_like(s.pos_conv2),
                        zeros_like(s.neg_conv1), zeros_like(s.neg_conv2)};
  };
  return {p.hyper, stream(p.rgb), stream(p.flow), zeros_like(p.ac_classifier)};
}

inline std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  for_each_block(p, [&](const std::string&, std::span<const double> b) {
    out.insert(out.end(), b.begin(), b.end());
  });
  return out;
}

inline void unflatten(std::span<const double> flat, ModelParams& p) {
  std::size_t pos = 0;
  for_each_block(p, [&](const std::string&, std::span<double> b) {
    if (pos + b.size() > flat.size()) throw DimensionError("unflatten: vector too short");
    std::copy(flat.begin() + pos, flat.begin() + pos + b.size(), b.begin());
    pos += b.size();
  });
  if (pos != flat.size()) throw DimensionError("unflatten: vector too long");
}

// ---------------------------------------------------------------------------
// Stream fusion

inline std::vector<double> fuse_streams(std::span<const double> a_rgb,
                                        std::span<const double> a_flow, double alpha) {
  if (a_rgb.size() != a_flow.size()) throw DimensionError("fuse_streams: length mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("fuse_streams: alpha outside [0,1]");
  std::vector<double> out(a_rgb.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * a_rgb[i] + (1.0 - alpha) * a_flow[i];
  return out;
}

inline Tensor2D fuse_streams(const Tensor2D& a_rgb, const Tensor2D& a_flow, double alpha) {
  if (a_rgb.rows() != a_flow.rows() || a_rgb.cols() != a_flow.cols()) {
    throw DimensionError("fuse_streams: shape mismatch");
  }
  return Tensor2D(a_rgb.rows(), a_rgb.cols(), fuse_streams(a_rgb.flat(), a_flow.flat(), alpha));
}

// ---------------------------------------------------------------------------
// FB branch

struct FBStreamOutputs {
  std::vector<double> sap;  // T, in (0,1)
  Tensor2D scp;             // (N+1) x T, raw logits
  std::vector<double> f_fg, f_bg;  // D
  std::vector<double> p_fg, p_bg;  // N+1 logits
};

struct FBOutputs {
  FBStreamOutputs rgb, flow;
  std::vector<double> sap;   // fused
  Tensor2D scp;              // fused
  std::vector<double> p_fg;  // fused video-level foreground logits
};

inline FBStreamOutputs fb_stream_forward(const Tensor2D& F, const StreamParams& sp) {
  const std::size_t T = F.cols();
  const std::size_t D = F.rows();
  if (T == 0) throw DimensionError("fb_forward: video has no snippets");
  FBStreamOutputs out;
  Tensor2D att = activate(fully_connected(F, sp.attention), Activation::Sigmoid);
  out.sap.assign(att.data().begin(), att.data().end());
  out.scp = fully_connected(F, sp.classifier);
  out.f_fg.assign(D, 0.0);
  out.f_bg.assign(D, 0.0);
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t d = 0; d < D; ++d) {
    auto x = F.row(d);
    double fg = 0.0, bg = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      fg += out.sap[t] * x[t];
      bg += (1.0 - out.sap[t]) * x[t];
    }
    out.f_fg[d] = fg * inv_t;
    out.f_bg[d] = bg * inv_t;
  }
  out.p_fg = fully_connected(std::span<const double>(out.f_fg), sp.classifier);
  out.p_bg = fully_connected(std::span<const double>(out.f_bg), sp.classifier);
  return out;
}

inline FBOutputs fb_forward(const StreamFeatures& features, const ModelParams& params) {
  const double alpha = params.hyper.alpha;
  FBOutputs out;
  out.rgb = fb_stream_forward(features.rgb, params.rgb);
  out.flow = fb_stream_forward(features.flow, params.flow);
  out.sap = fuse_streams(out.rgb.sap, out.flow.sap, alpha);
  out.scp = fuse_streams(out.rgb.scp, out.flow.scp, alpha);
  out.p_fg = fuse_streams(out.rgb.p_fg, out.flow.p_fg, alpha);
  return out;
}

// ---------------------------------------------------------------------------
// AC branch

/// One latent module: sigmoid(conv2(relu(conv1(F)))). `hidden` is kept for
/// the backward pass.
struct LatentOutputs {
  std::vector<double> value;  // T, in (0,1)
  Tensor2D hidden;            // H x T, post-relu
};

inline LatentOutputs latent_forward(const Tensor2D& F, const LayerParams& conv1,
                                    const LayerParams& conv2) {
  LatentOutputs out;
  out.hidden = activate(temporal_conv(F, conv1), Activation::Relu);
  Tensor2D v = activate(temporal_conv(out.hidden, conv2), Activation::Sigmoid);
  out.value.assign(v.data().begin(), v.data().end());
  return out;
}

struct StreamLatents {
  LatentOutputs pos, neg;
};

struct Latents {
  StreamLatents rgb, flow;
};

inline Latents ac_latents(const StreamFeatures& features, const ModelParams& params) {
  if (features.length() == 0) throw DimensionError("ac_latents: video has no snippets");
  auto stream = [](const Tensor2D& F, const StreamParams& sp) {
    return StreamLatents{latent_forward(F, sp.pos_conv1, sp.pos_conv2),
                         latent_forward(F, sp.neg_conv1, sp.neg_conv2)};
  };
  return {stream(features.rgb, params.rgb), stream(features.flow, params.flow)};
}

struct Attentions {
  std::vector<double> fg, action, context;
};

/// fg = sigma(L+ + L-), action = sigma(L+), context = sigma(L- - L+).
inline Attentions combine_latents(std::span<const double> lat_pos, std::span<const double> lat_neg) {
  if (lat_pos.size() != lat_neg.size()) throw DimensionError("combine_latents: length mismatch");
  const std::size_t T = lat_pos.size();
  Attentions out{std::vector<double>(T), std::vector<double>(T), std::vector<double>(T)};
  for (std::size_t t = 0; t < T; ++t) {
    out.fg[t] = sigmoid(lat_pos[t] + lat_neg[t]);
    out.action[t] = sigmoid(lat_pos[t]);
    out.context[t] = sigmoid(lat_neg[t] - lat_pos[t]);
  }
  return out;
}

struct IndexSet {
  std::vector<std::size_t> indices;  // sorted, 0-based
  bool fallback = false;             // no snippet passed the threshold; all are used
};

/// Snippets whose fused attention is strictly above 0.5; all snippets when none is.
inline IndexSet foreground_index_set(std::span<const double> sap) {
  IndexSet out;
  for (std::size_t t = 0; t < sap.size(); ++t) {
    if (sap[t] > 0.5) out.indices.push_back(t);
  }
  if (out.indices.empty()) {
    out.fallback = true;
    for (std::size_t t = 0; t < sap.size(); ++t) out.indices.push_back(t);
  }
  return out;
}

struct PooledPredictions {
  std::vector<double> pooled_fg, pooled_a, pooled_c;  // 2D
  std::vector<double> pred_fg, pred_a, pred_c;        // 2N logits
  Tensor2D acp;                                       // 2N x T
};

inline std::vector<double> pool_attended(const Tensor2D& concat, std::span<const double> att,
                                         const IndexSet& I) {
  const std::size_t rows = concat.rows();
  if (I.indices.empty()) throw ContractError("pool_attended: empty index set");
  std::vector<double> out(rows, 0.0);
  const double inv = 1.0 / static_cast<double>(I.indices.size());
  for (std::size_t r = 0; r < rows; ++r) {
    auto x = concat.row(r);
    double acc = 0.0;
    for (std::size_t t : I.indices) acc += att[t] * x[t];
    out[r] = acc * inv;
  }
  return out;
}

inline PooledPredictions ac_pool_and_classify(const StreamFeatures& features,
                                              const Attentions& fused, const IndexSet& I,
                                              const ModelParams& params) {
  PooledPredictions out;
  const auto& m = params.ac_classifier;
  out.pooled_fg = pool_attended(features.concat, fused.fg, I);
  out.pooled_a = pool_attended(features.concat, fused.action, I);
  out.pooled_c = pool_attended(features.concat, fused.context, I);
  out.pred_fg = fully_connected(std::span<const double>(out.pooled_fg), m);
  out.pred_a = fully_connected(std::span<const double>(out.pooled_a), m);
  out.pred_c = fully_connected(std::span<const double>(out.pooled_c), m);
  out.acp = fully_connected(features.concat, m);
  return out;
}

/// offset(n,t) = q(n,t) - q(N+n,t) for t in I and 0 elsewhere, with q the
/// per-snippet softmax of the action-context predictions over all 2N rows.
inline Tensor2D action_context_offset(const Tensor2D& acp, const IndexSet& I) {
  if (acp.rows() % 2 != 0 || acp.rows() == 0) {
    throw DimensionError("action_context_offset: acp must have 2N rows");
  }
  const std::size_t N = acp.rows() / 2;
  Tensor2D offset(N, acp.cols());
  for (std::size_t t : I.indices) {
    const auto q = softmax(acp.column(t));
    for (std::size_t n = 0; n < N; ++n) offset(n, t) = q[n] - q[N + n];
  }
  return offset;
}

struct ACStreamOutputs {
  LatentOutputs pos, neg;
  Attentions att;
};

struct ACOutputs {
  ACStreamOutputs rgb, flow;
  Attentions att;  // fused
  IndexSet fg_index;
  PooledPredictions pred;
  Tensor2D offset;  // N x T

  std::size_t fg_count() const { return fg_index.indices.size(); }
};

inline Attentions fuse_attentions(const Attentions& rgb, const Attentions& flow, double alpha) {
  return {fuse_streams(rgb.fg, flow.fg, alpha), fuse_streams(rgb.action, flow.action, alpha),
          fuse_streams(rgb.context, flow.context, alpha)};
}

/// AC branch. The foreground set comes from `fused_sap` unless `fixed_index`
/// is given (used when the selection must be held constant).
inline ACOutputs ac_forward(const StreamFeatures& features, std::span<const double> fused_sap,
                            const ModelParams& params, const IndexSet* fixed_index = nullptr) {
  Latents lat = ac_latents(features, params);
  ACOutputs out;
  out.rgb.att = combine_latents(lat.rgb.pos.value, lat.rgb.neg.value);
  out.flow.att = combine_latents(lat.flow.pos.value, lat.flow.neg.value);
  out.rgb.pos = std::move(lat.rgb.pos);
  out.rgb.neg = std::move(lat.rgb.neg);
  out.flow.pos = std::move(lat.flow.pos);
  out.flow.neg = std::move(lat.flow.neg);
  out.att = fuse_attentions(out.rgb.att, out.flow.att, params.hyper.alpha);
  out.fg_index = fixed_index ? *fixed_index : foreground_index_set(fused_sap);
  out.pred = ac_pool_and_classify(features, out.att, out.fg_index, params);
  out.offset = action_context_offset(out.pred.acp, out.fg_index);
  return out;
}

struct ModelOutputs {
  FBOutputs fb;
  ACOutputs ac;
};

inline ModelOutputs forward(const StreamFeatures& features, const ModelParams& params) {
  ModelOutputs out;
  out.fb = fb_forward(features, params);
  out.ac = ac_forward(features, out.fb.sap, params);
  return out;
}

/// Action attention lies in (0.5, sigmoid(1)) because the latent it squashes
/// is itself a sigmoid output. Thresholds on the latent scale (0,1) are
/// therefore applied to the action attention as sigmoid(threshold).
inline double action_attention_threshold(double latent_threshold) {
  return sigmoid(latent_threshold);
}

}  // namespace acsloc
