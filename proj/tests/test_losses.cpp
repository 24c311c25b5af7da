#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "acsloc/losses.hpp"

using namespace acsloc;

namespace {

const double kLn2 = std::numbers::ln2;

StreamFeatures random_features(std::size_t D, std::size_t T, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor2D rgb(D, T), flow(D, T);
  for (double& v : rgb.flat()) v = rng.normal();
  for (double& v : flow.flat()) v = rng.normal();
  return make_stream_features(std::move(rgb), std::move(flow));
}

ModelHyper small_hyper() {
  ModelHyper h;
  h.num_classes = 3;
  h.feature_dim = 4;
  h.hidden = 6;
  return h;
}

}  // namespace

TEST(FbLoss, UniformLogitsGiveLogNPlusOne) {
  FBOutputs fb;
  for (FBStreamOutputs* s : {&fb.rgb, &fb.flow}) {
    s->p_fg.assign(4, 0.0);
    s->p_bg.assign(4, 0.0);
  }
  const auto y = VideoLabel::from_classes(3, {2});
  EXPECT_NEAR(fb_classification_loss(fb, y), 4.0 * std::log(4.0), 1e-12);
}

TEST(FbLoss, SaturatedLogitsNearZero) {
  FBOutputs fb;
  for (FBStreamOutputs* s : {&fb.rgb, &fb.flow}) {
    s->p_fg = {0, 0, 20, 0};
    s->p_bg = {20, 0, 0, 0};
  }
  EXPECT_LT(fb_classification_loss(fb, VideoLabel::from_classes(3, {2})), 1e-6);
}

TEST(FbLoss, Targets) {
  EXPECT_EQ(fb_foreground_target(VideoLabel::from_classes(3, {1, 2})),
            (std::vector<double>{0, 0.5, 0.5, 0}));
  EXPECT_EQ(fb_background_target(3), (std::vector<double>{1, 0, 0, 0}));
  EXPECT_THROW(fb_foreground_target(VideoLabel::from_classes(3, {})), ContractError);
}

TEST(AcLoss, Targets) {
  const auto t = ac_targets(VideoLabel::from_classes(2, {1}));
  EXPECT_EQ(t.fg, (std::vector<double>{0.5, 0, 0.5, 0}));
  EXPECT_EQ(t.action, (std::vector<double>{1, 0, 0, 0}));
  EXPECT_EQ(t.context, (std::vector<double>{0, 0, 1, 0}));
  const auto two = ac_targets(VideoLabel::from_classes(2, {1, 2}));
  EXPECT_EQ(two.fg, (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  EXPECT_EQ(two.action, (std::vector<double>{0.5, 0.5, 0, 0}));
  EXPECT_EQ(two.context, (std::vector<double>{0, 0, 0.5, 0.5}));
}

TEST(AcLoss, SaturatedNearZero) {
  const auto y = VideoLabel::from_classes(2, {2});
  const std::vector<double> a{0, 20, 0, 0}, c{0, 0, 0, 20};
  // The fg target is split, so its minimum is ln 2 at equal action/context logits.
  const std::vector<double> fg{0, 20, 0, 20};
  EXPECT_NEAR(ac_classification_loss(fg, a, c, y), kLn2, 1e-6);
}

TEST(WeightedLogistic, Examples) {
  EXPECT_NEAR(weighted_logistic(std::vector<double>{1, 0, 1}, std::vector<double>{1, 0, 1}), 0.0, 1e-6);
  EXPECT_NEAR(weighted_logistic(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<double>{1, 0, 0, 0}),
              2.0 * kLn2, 1e-15);
  EXPECT_NEAR(weighted_logistic(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}), 2.0 * kLn2, 1e-15);
  const std::vector<double> p{0.2, 0.6};
  EXPECT_NEAR(weighted_logistic(p, std::vector<double>{0, 0}),
              -(std::log(0.8) + std::log(0.4)) / 2.0, 1e-15);
  EXPECT_EQ(weighted_logistic(std::vector<double>{}, std::vector<double>{}), 0.0);
}

TEST(WeightedLogistic, PermutationAndDuplicationInvariant) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 8));
    std::vector<double> p(n), q(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform(0.01, 0.99);
      q[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    }
    const double base = weighted_logistic(p, q);
    std::vector<double> rp(p.rbegin(), p.rend()), rq(q.rbegin(), q.rend());
    EXPECT_NEAR(weighted_logistic(rp, rq), base, 1e-12);
    auto dp = p, dq = q;
    dp.insert(dp.end(), p.begin(), p.end());
    dq.insert(dq.end(), q.begin(), q.end());
    EXPECT_NEAR(weighted_logistic(dp, dq), base, 1e-12);
  }
}

TEST(WeightedLogistic, GradientMatchesDifferences) {
  const std::vector<double> p{0.3, 0.8, 0.55, 0.1}, q{1, 0, 1, 0};
  const auto r = weighted_logistic_with_grad(p, q);
  auto f = [&](std::span<const double> x) { return weighted_logistic(x, q); };
  EXPECT_LT(grad_check(f, p, r.grad, 1e-6), 1e-7);
}

TEST(GuidanceSets, HandExample) {
  const auto s = build_guidance_sets(std::vector<double>{0.9, 0.9, 0.1}, std::vector<double>{0.9, 0.1, 0.1},
                                     0.7, 0.3);
  EXPECT_EQ(s.pos_action, (std::vector<std::size_t>{0}));
  EXPECT_EQ(s.neg_action, (std::vector<std::size_t>{2}));
  EXPECT_EQ(s.pos_context, (std::vector<std::size_t>{1}));
  EXPECT_EQ(s.neg_context, (std::vector<std::size_t>{0, 2}));
}

TEST(GuidanceSets, NeutralAttentionGivesEmptySets) {
  const std::vector<double> half(5, 0.5);
  const auto s = build_guidance_sets(half, half, 0.7, 0.3);
  EXPECT_TRUE(s.pos_action.empty() && s.neg_action.empty() && s.pos_context.empty() &&
              s.neg_context.empty());
  EXPECT_THROW(build_guidance_sets(half, half, 0.3, 0.7), ContractError);
}

TEST(GuidanceSets, PropertiesOnRandomInputs) {
  SplitMix64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(12), f(12);
    for (std::size_t t = 0; t < 12; ++t) {
      r[t] = rng.uniform();
      f[t] = rng.uniform();
    }
    const auto s = build_guidance_sets(r, f, 0.7, 0.3);
    std::vector<std::size_t> both;
    std::ranges::set_intersection(s.pos_action, s.neg_action, std::back_inserter(both));
    EXPECT_TRUE(both.empty());
    std::vector<std::size_t> uni;
    std::ranges::set_union(s.pos_action, s.neg_action, std::back_inserter(uni));
    EXPECT_EQ(uni, s.neg_context);
  }
}

TEST(GuidanceLoss, Examples) {
  GuidanceSets s;
  s.pos_action = {0};
  s.neg_action = {2};
  const std::vector<double> half(3, 0.5);
  EXPECT_NEAR(guidance_loss(half, half, s), 2.0 * kLn2, 1e-15);
  EXPECT_EQ(guidance_loss(half, half, GuidanceSets{}), 0.0);

  GuidanceSets full{{0}, {2}, {1}, {0, 2}};
  EXPECT_NEAR(guidance_loss(std::vector<double>{1, 0.5, 0}, std::vector<double>{0, 1, 0}, full), 0.0, 1e-6);
}

TEST(GuidanceLoss, MonotoneInPositiveActionAttention) {
  GuidanceSets s{{0, 1}, {3}, {}, {}};
  std::vector<double> att_a{0.1, 0.4, 0.5, 0.2};
  const std::vector<double> att_c(4, 0.5);
  double prev = guidance_loss(att_a, att_c, s);
  for (double v = 0.15; v < 1.0; v += 0.05) {
    att_a[0] = v;
    const double cur = guidance_loss(att_a, att_c, s);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(Smoothing, ConstantSequenceIsUnchanged) {
  const std::vector<double> sap(9, 0.37);
  const auto g = gaussian_smooth(sap);
  for (double v : g) EXPECT_NEAR(v, 0.37, 1e-15);
  const std::vector<double> att(9, 0.57);
  EXPECT_NEAR(mse_loss(att, sap), 0.2 * 0.2, 1e-14);
  EXPECT_EQ(mse_to_target(g, g), 0.0);
}

TEST(Smoothing, ImpulseMatchesDirectConvolution) {
  const std::vector<double> sap{0, 0, 1, 0, 0};
  const auto got = gaussian_smooth(sap);
  // Reflect padding folds the kernel back onto the sequence; sum every tap
  // that lands on the impulse after reflection.
  double norm = 0.0;
  for (int i = -6; i <= 6; ++i) norm += std::exp(-i * i / 8.0);
  for (int t = 0; t < 5; ++t) {
    double acc = 0.0;
    for (int j = -6; j <= 6; ++j) {
      int idx = t + j;
      while (idx < 0 || idx > 4) idx = idx < 0 ? -idx - 1 : 9 - idx;
      if (idx == 2) acc += std::exp(-j * j / 8.0) / norm;
    }
    EXPECT_NEAR(got[static_cast<std::size_t>(t)], acc, 1e-15);
  }
}

TEST(Smoothing, ReflectIndex) {
  EXPECT_EQ(reflect_index(-1, 5), 0u);
  EXPECT_EQ(reflect_index(-2, 5), 1u);
  EXPECT_EQ(reflect_index(5, 5), 4u);
  EXPECT_EQ(reflect_index(6, 5), 3u);
  EXPECT_EQ(reflect_index(-1, 1), 0u);
  EXPECT_EQ(reflect_index(7, 1), 0u);
}

TEST(TotalLoss, Examples) {
  EXPECT_DOUBLE_EQ(total_loss(1.0, 0.5, 0.25, 0.25, 1.0).total, 2.0);
  EXPECT_DOUBLE_EQ(total_loss(1.0, 0.5, 0.25, 0.25, 0.0).total, 1.5);
  EXPECT_EQ(total_loss(0, 0, 0, 0, 1.0).total, 0.0);
  const auto a = total_loss(1.3, 0.7, 0.4, 0.9, 0.6);
  const auto b = total_loss(1.3, 0.7, 0.4, 0.9, 1.2);
  EXPECT_NEAR(b.total - 2.0, 2.0 * (a.total - 2.0), 1e-14);
  EXPECT_THROW(total_loss(1, 1, 1, 1, -1.0), ContractError);
}

TEST(VideoObjective, ComponentsAreNonNegativeAndSumToTotal) {
  const auto params = init_model(small_hyper(), 3);
  const auto features = random_features(4, 10, 4);
  const auto y = VideoLabel::from_classes(3, {1, 3});
  LossWeights w;
  w.lambda = 0.7;
  const auto obj = video_objective(params, features, y, w);
  const auto& p = obj.parts;
  EXPECT_GE(p.l_cls_fb, 0.0);
  EXPECT_GE(p.l_cls_ac, 0.0);
  EXPECT_GE(p.l_g, 0.0);
  EXPECT_GE(p.l_mse, 0.0);
  EXPECT_NEAR(p.total, p.l_cls_fb + p.l_cls_ac + 0.7 * (p.l_g + p.l_mse), 1e-12);
}

TEST(VideoObjective, TogglesAreExactMultipliers) {
  const auto params = init_model(small_hyper(), 6);
  const auto features = random_features(4, 9, 7);
  const auto y = VideoLabel::from_classes(3, {2});
  LossWeights all;
  auto all_grad = zeros_like(params);
  const auto base = video_objective(params, features, y, all, &all_grad);

  std::vector<double> summed(flatten(all_grad).size(), 0.0);
  for (int k = 0; k < 4; ++k) {
    LossWeights one;
    one.use_fb = k == 0;
    one.use_ac = k == 1;
    one.use_guidance = k == 2;
    one.use_mse = k == 3;
    auto g = zeros_like(params);
    const auto obj = video_objective(params, features, y, one, &g, &base.selections);
    EXPECT_EQ(obj.parts.l_cls_fb, base.parts.l_cls_fb);
    EXPECT_EQ(obj.parts.l_g, base.parts.l_g);
    const auto flat = flatten(g);
    for (std::size_t i = 0; i < flat.size(); ++i) summed[i] += flat[i];
  }
  const auto expected = flatten(all_grad);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(summed[i], expected[i], 1e-12);

  LossWeights no_guidance;
  no_guidance.use_guidance = false;
  auto g1 = zeros_like(params);
  video_objective(params, features, y, no_guidance, &g1, &base.selections);
  LossWeights zero_lambda_guidance = no_guidance;
  zero_lambda_guidance.use_guidance = true;
  zero_lambda_guidance.lambda = 1.0;
  auto g2 = zeros_like(params);
  auto g3 = zeros_like(params);
  LossWeights guidance_only;
  guidance_only.use_fb = guidance_only.use_ac = guidance_only.use_mse = false;
  video_objective(params, features, y, zero_lambda_guidance, &g2, &base.selections);
  video_objective(params, features, y, guidance_only, &g3, &base.selections);
  const auto f1 = flatten(g1), f2 = flatten(g2), f3 = flatten(g3);
  for (std::size_t i = 0; i < f1.size(); ++i) EXPECT_NEAR(f1[i] + f3[i], f2[i], 1e-12);
}

TEST(VideoObjective, TotalGradientPassesCheck) {
  auto params = init_model(small_hyper(), 12);
  const auto features = random_features(4, 8, 13);
  const auto y = VideoLabel::from_classes(3, {3});
  LossWeights w;
  auto grad = zeros_like(params);
  const auto base = video_objective(params, features, y, w, &grad);
  auto f = [&](std::span<const double> x) {
    ModelParams p = params;
    unflatten(x, p);
    return video_objective(p, features, y, w, nullptr, &base.selections).parts.total;
  };
  EXPECT_LT(grad_check(f, flatten(params), flatten(grad), 1e-5), 1e-4);
}
