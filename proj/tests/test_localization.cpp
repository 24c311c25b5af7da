#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "acsloc/localization.hpp"
#include "acsloc/reference.hpp"

using namespace acsloc;

namespace {

std::vector<std::pair<std::size_t, std::size_t>> spans(const std::vector<Proposal>& ps) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& p : ps) out.emplace_back(p.start, p.end);
  return out;
}

LocalizationInputs random_inputs(std::size_t N, std::size_t T, SplitMix64& rng) {
  LocalizationInputs in;
  in.sap.resize(T);
  in.att_a.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    in.sap[t] = rng.uniform();
    in.att_a[t] = rng.uniform(0.5, sigmoid(1.0));
  }
  in.scp = Tensor2D(N + 1, T);
  for (double& v : in.scp.flat()) v = rng.normal() * 2.0;
  in.offset = Tensor2D(N, T);
  for (double& v : in.offset.flat()) v = rng.uniform(-1.0, 1.0);
  in.p_fg.resize(N + 1);
  for (double& v : in.p_fg) v = rng.normal();
  return in;
}

bool same_detection_set(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  auto key = [](const Detection& d) { return std::tuple(d.cls, d.start, d.end); };
  std::vector<std::tuple<int, std::size_t, std::size_t>> ka, kb;
  std::ranges::transform(a, std::back_inserter(ka), key);
  std::ranges::transform(b, std::back_inserter(kb), key);
  std::ranges::sort(ka);
  std::ranges::sort(kb);
  return ka == kb;
}

}  // namespace

TEST(ThresholdProposals, Examples) {
  EXPECT_EQ(spans(threshold_proposals(std::vector<double>{0.9, 0.9, 0.1, 0.6}, 0.5)),
            (std::vector<std::pair<std::size_t, std::size_t>>{{0, 2}, {3, 4}}));
  EXPECT_TRUE(threshold_proposals(std::vector<double>{0.1, 0.5, 0.2}, 0.5).empty());
  EXPECT_EQ(spans(threshold_proposals(std::vector<double>(7, 0.6), 0.5)),
            (std::vector<std::pair<std::size_t, std::size_t>>{{0, 7}}));
}

TEST(ThresholdProposals, MatchesExhaustiveRuns) {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> seq(1 + static_cast<std::size_t>(rng.uniform_int(0, 11)));
    for (double& v : seq) v = rng.uniform() < 0.2 ? 0.5 : rng.uniform();
    const auto got = threshold_proposals(seq, 0.5);
    EXPECT_EQ(spans(got), reference::maximal_runs(seq, 0.5));
    for (std::size_t i = 1; i < got.size(); ++i) EXPECT_LT(got[i - 1].end, got[i].start);
  }
}

TEST(Oic, HandExample) {
  const std::vector<double> v{0, 0, 1, 1, 1, 1, 0, 0};
  EXPECT_EQ(oic_inflation(4), 1u);
  EXPECT_DOUBLE_EQ(oic_score(2, 6, v), 1.0);
}

TEST(Oic, ConstantSequenceScoresZero) {
  const std::vector<double> v(10, 0.3);
  EXPECT_EQ(oic_score(2, 5, v), 0.0);
  EXPECT_EQ(oic_score(0, 1, v), 0.0);
}

TEST(Oic, WholeVideoScoresInnerMean) {
  const std::vector<double> v{0.2, 0.4, 0.9};
  EXPECT_DOUBLE_EQ(oic_score(0, 3, v), (0.2 + 0.4 + 0.9) / 3.0);
  EXPECT_THROW(oic_score(2, 2, v), ContractError);
  EXPECT_THROW(oic_score(1, 4, v), ContractError);
}

TEST(Oic, InflationRounding) {
  EXPECT_EQ(oic_inflation(1), 1u);
  EXPECT_EQ(oic_inflation(5), 1u);
  EXPECT_EQ(oic_inflation(6), 2u);  // 1.5 rounds half away from zero
  EXPECT_EQ(oic_inflation(10), 3u);
}

TEST(Oic, MatchesReferenceAndShiftInvariance) {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t T = 1 + static_cast<std::size_t>(rng.uniform_int(0, 15));
    std::vector<double> v(T);
    for (double& x : v) x = rng.normal();
    const auto s = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(T) - 1));
    const auto e = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(s) + 1,
                                                             static_cast<std::int64_t>(T)));
    EXPECT_EQ(oic_score(s, e, v), reference::oic_score(s, e, v));
    auto shifted = v;
    for (double& x : shifted) x += 0.25;
    const bool outer_empty = s == 0 && e == T;
    const double expected = oic_score(s, e, v) + (outer_empty ? 0.25 : 0.0);
    EXPECT_NEAR(oic_score(s, e, shifted), expected, 1e-12);
  }
}

TEST(CorrectedSequence, ZeroOffsetAndRange) {
  SplitMix64 rng(5);
  const auto in = random_inputs(3, 9, rng);
  const auto prob = softmax_columns(in.scp);
  const Tensor2D zero(3, 9);
  for (int n = 1; n <= 3; ++n) {
    EXPECT_EQ(corrected_sequence(prob, zero, n, Scoring::S2), corrected_sequence(prob, zero, n, Scoring::S1));
    const auto v2 = corrected_sequence(prob, in.offset, n, Scoring::S2);
    const auto v1 = corrected_sequence(prob, in.offset, n, Scoring::S1);
    for (std::size_t t = 0; t < 9; ++t) {
      EXPECT_GT(v2[t], -1.0);
      EXPECT_LT(v2[t], 2.0);
      EXPECT_EQ(v2[t], v1[t] + in.offset(static_cast<std::size_t>(n - 1), t));
    }
  }
  EXPECT_THROW(corrected_sequence(prob, zero, 0, Scoring::S1), ContractError);
  EXPECT_THROW(corrected_sequence(prob, zero, 4, Scoring::S1), ContractError);
}

TEST(SelectVideoClasses, Examples) {
  const std::vector<double> dominant{0.0, 9.0, 0.0, 0.0};
  EXPECT_EQ(select_video_classes(dominant), (std::vector<int>{1}));
  const std::vector<double> tie{5.0, 1.0, 1.0, -3.0};
  EXPECT_EQ(select_video_classes(tie), (std::vector<int>{1, 2}));
  // Probabilities (0.6, 0.3, 0.05, 0.05); the background logit is ignored.
  const std::vector<double> probs{100.0, std::log(0.6), std::log(0.3), std::log(0.05), std::log(0.05)};
  EXPECT_EQ(select_video_classes(probs), (std::vector<int>{1, 2}));
}

TEST(Tiou, Examples) {
  EXPECT_DOUBLE_EQ(tiou(0, 4, 2, 6), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(tiou(0, 3, 2, 5), 0.2);
  EXPECT_EQ(tiou(0, 2, 2, 4), 0.0);
  EXPECT_EQ(tiou(1, 5, 1, 5), 1.0);
  EXPECT_DOUBLE_EQ(tiou(0, 3, 1, 4), 0.5);
  EXPECT_DOUBLE_EQ(tiou(0, 3, 1, 4), reference::interval_iou(0, 3, 1, 4));
}

TEST(Nms, Examples) {
  const std::vector<Detection> disjoint{{1, 0, 2, 0.5}, {1, 3, 5, 0.9}, {1, 6, 9, 0.1}};
  EXPECT_EQ(nms(disjoint, 0.5).size(), 3u);
  const std::vector<Detection> twins{{1, 2, 6, 0.8}, {1, 2, 6, 0.9}};
  const auto kept = nms(twins, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.9);
  const std::vector<Detection> chain{{1, 0, 4, 0.9}, {1, 1, 5, 0.8}, {1, 3, 7, 0.7}};
  EXPECT_EQ(nms(chain, 0.5), reference::nms(chain, 0.5));
  EXPECT_EQ(nms(chain, 0.5).size(), 2u);
}

TEST(Nms, TieBreaking) {
  const std::vector<Detection> tied{{1, 4, 6, 0.5}, {1, 2, 6, 0.5}, {1, 2, 5, 0.5}};
  const auto kept = nms(tied, 0.3);
  ASSERT_FALSE(kept.empty());
  EXPECT_EQ(kept[0], (Detection{1, 2, 5, 0.5}));
}

TEST(Nms, MatchesGreedyOracleAndProperties) {
  SplitMix64 rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Detection> dets;
    const auto n = rng.uniform_int(0, 8);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto s = static_cast<std::size_t>(rng.uniform_int(0, 10));
      const auto e = s + static_cast<std::size_t>(rng.uniform_int(1, 5));
      dets.push_back({1, s, e, std::round(rng.uniform() * 4.0) / 4.0});
    }
    const double thr = rng.uniform(0.1, 0.9);
    const auto kept = nms(dets, thr);
    EXPECT_EQ(kept, reference::nms(dets, thr));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      EXPECT_NE(std::ranges::find(dets, kept[i]), dets.end());
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        EXPECT_LT(tiou(kept[i].start, kept[i].end, kept[j].start, kept[j].end), thr);
      }
    }
  }
}

TEST(Variants, Presets) {
  const auto v0 = variant_preset(0);
  EXPECT_TRUE(v0.use_p1 && !v0.use_p2 && !v0.use_p3 && v0.scoring == Scoring::S1);
  const auto v4 = variant_preset(4);
  EXPECT_TRUE(!v4.use_p1 && v4.use_p2 && v4.use_p3 && v4.scoring == Scoring::S2);
  const auto v5 = variant_preset(5);
  EXPECT_TRUE(v5.use_p1 && v5.use_p2 && v5.use_p3);
  EXPECT_THROW(variant_preset(6), ConfigError);
  VariantConfig none;
  none.use_p2 = none.use_p3 = false;
  EXPECT_THROW(none.validate(), ConfigError);
}

TEST(GenerateDetections, BaselineWithoutForegroundIsEmpty) {
  SplitMix64 rng(7);
  auto in = random_inputs(2, 10, rng);
  std::ranges::fill(in.sap, 0.3);
  EXPECT_TRUE(generate_detections(in, variant_preset(0)).empty());
}

TEST(GenerateDetections, HandBuiltMatchesExhaustiveOracle) {
  // T=8, N=1: every proposal source and scoring rule evaluated by hand.
  LocalizationInputs in;
  in.sap = {0.2, 0.7, 0.8, 0.4, 0.9, 0.9, 0.1, 0.6};
  in.att_a = {0.55, 0.7, 0.7, 0.6, 0.65, 0.7, 0.5, 0.5};
  in.scp = Tensor2D(2, 8, {0, 0, 0, 0, 0, 0, 0, 0, -1, 2, 1, 0.5, 3, 2, -2, 0});
  in.offset = Tensor2D(1, 8, {-0.2, 0.3, 0.4, -0.1, 0.6, 0.2, -0.5, -0.3});
  in.p_fg = {0.0, 1.0};

  for (int id = 0; id <= 5; ++id) {
    const auto cfg = variant_preset(id);
    std::vector<double> v(8);
    for (std::size_t t = 0; t < 8; ++t) {
      const double e0 = std::exp(in.scp(0, t)), e1 = std::exp(in.scp(1, t));
      v[t] = e1 / (e0 + e1) + (cfg.scoring == Scoring::S2 ? in.offset(0, t) : 0.0);
    }
    std::vector<Detection> pool;
    auto add = [&](const std::vector<double>& seq, double thr) {
      for (auto [s, e] : reference::maximal_runs(seq, thr)) {
        pool.push_back({1, s, e, reference::oic_score(s, e, v)});
      }
    };
    if (cfg.use_p1) add(in.sap, 0.5);
    if (cfg.use_p2) add(in.att_a, sigmoid(0.5));
    if (cfg.use_p3) add(std::vector<double>(in.offset.row(0).begin(), in.offset.row(0).end()), 0.0);
    const auto expected = reference::nms(pool, cfg.nms_tiou);
    const auto got = generate_detections(in, cfg);
    EXPECT_TRUE(same_detection_set(got, expected)) << "variant #" << id;
    for (std::size_t i = 0; i < got.size(); ++i) {
      const auto it = std::ranges::find_if(expected, [&](const Detection& d) {
        return d.start == got[i].start && d.end == got[i].end;
      });
      ASSERT_NE(it, expected.end());
      EXPECT_NEAR(got[i].score, it->score, 1e-15);
      if (i > 0) EXPECT_LE(got[i - 1].start, got[i].start);
    }
  }
}

TEST(GenerateDetections, UnionVariantMatchesSourcesBeforeNms) {
  SplitMix64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_inputs(3, 12, rng);
    const auto classes = select_video_classes(in.p_fg);
    auto p2 = collect_proposals(in, variant_preset(2), classes);
    const auto p3 = collect_proposals(in, variant_preset(3), classes);
    p2.insert(p2.end(), p3.begin(), p3.end());
    EXPECT_EQ(collect_proposals(in, variant_preset(4), classes), p2);
  }
}

TEST(GenerateDetections, DisablingASourceNeverAddsDetections) {
  SplitMix64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_inputs(2, 14, rng);
    auto all = variant_preset(5);
    all.nms_tiou = 1.0;  // keep everything but exact duplicates
    const auto full = generate_detections(in, all);
    for (int drop = 0; drop < 3; ++drop) {
      auto cfg = all;
      if (drop == 0) cfg.use_p1 = false;
      if (drop == 1) cfg.use_p2 = false;
      if (drop == 2) cfg.use_p3 = false;
      for (const auto& d : generate_detections(in, cfg)) {
        EXPECT_NE(std::ranges::find_if(full, [&](const Detection& f) {
                    return f.cls == d.cls && f.start == d.start && f.end == d.end;
                  }),
                  full.end());
      }
    }
  }
}

TEST(GenerateDetections, SpansComeFromEnabledSources) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_inputs(2, 12, rng);
    for (int id = 0; id <= 5; ++id) {
      const auto cfg = variant_preset(id);
      const auto props = collect_proposals(in, cfg, select_video_classes(in.p_fg));
      for (const auto& d : generate_detections(in, cfg)) {
        EXPECT_NE(std::ranges::find_if(props, [&](const Proposal& p) {
                    return p.start == d.start && p.end == d.end && (!p.cls || *p.cls == d.cls);
                  }),
                  props.end());
        EXPECT_TRUE(std::isfinite(d.score));
      }
    }
  }
}
