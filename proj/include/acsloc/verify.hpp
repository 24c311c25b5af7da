#pragma once

// Built-in verification suite: gradient checks against central differences,
// brute-force oracle comparisons, algebraic identities and range invariants
// over random forward passes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "acsloc/evaluation.hpp"
#include "acsloc/localization.hpp"
#include "acsloc/losses.hpp"
#include "acsloc/model.hpp"
#include "acsloc/reference.hpp"

namespace acsloc {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::size_t grad_instances = 10;
  std::size_t oracle_trials = 1000;
  std::size_t forward_passes = 200;
  std::uint64_t seed = 20240601;
  double grad_tolerance = 1e-4;
  double grad_step = 1e-5;
  // Test hook: mutates an analytic gradient before it is compared.
  std::function<void(const std::string& loss, ModelParams& grad)> gradient_fault;
};

namespace verify_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

template <class Fn>
CheckResult timed(const std::string& name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r{name, false, "", 0.0};
  try {
    fn(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline Tensor2D random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols, double scale) {
  Tensor2D m(rows, cols);
  for (double& v : m.flat()) v = scale * rng.normal();
  return m;
}

inline VideoLabel random_label(SplitMix64& rng, std::size_t num_classes) {
  std::vector<int> classes;
  for (std::size_t n = 1; n <= num_classes; ++n) {
    if (rng.uniform() < 0.4) classes.push_back(static_cast<int>(n));
  }
  if (classes.empty()) classes.push_back(static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(num_classes))));
  return VideoLabel::from_classes(num_classes, classes);
}

/// Random but structurally valid frozen selections, so every loss term has
/// a non-empty support.
inline FrozenSelections random_selections(SplitMix64& rng, std::size_t T) {
  FrozenSelections s;
  for (std::size_t t = 0; t < T; ++t) {
    if (rng.uniform() < 0.6) s.fg_index.indices.push_back(t);
    const double u = rng.uniform();
    if (u < 0.25) {
      s.guidance.pos_action.push_back(t);
    } else if (u < 0.5) {
      s.guidance.neg_action.push_back(t);
    } else if (u < 0.75) {
      s.guidance.pos_context.push_back(t);
    }
    s.smoothed_sap.push_back(rng.uniform(0.2, 0.8));
  }
  if (s.fg_index.indices.empty()) s.fg_index.indices.push_back(0);
  std::set<std::size_t> neg(s.guidance.pos_action.begin(), s.guidance.pos_action.end());
  neg.insert(s.guidance.neg_action.begin(), s.guidance.neg_action.end());
  s.guidance.neg_context.assign(neg.begin(), neg.end());
  return s;
}

struct BlockSpan {
  std::string name;
  std::size_t offset;
  std::size_t size;
};

inline std::vector<BlockSpan> block_spans(const ModelParams& p) {
  std::vector<BlockSpan> out;
  std::size_t off = 0;
  for_each_block(p, [&](const std::string& name, std::span<const double> b) {
    out.push_back({name, off, b.size()});
    off += b.size();
  });
  return out;
}

struct LossSelector {
  const char* name;
  LossWeights weights;
};

inline std::vector<LossSelector> loss_selectors() {
  auto only = [](bool fb, bool ac, bool g, bool mse) {
    LossWeights w;
    w.use_fb = fb;
    w.use_ac = ac;
    w.use_guidance = g;
    w.use_mse = mse;
    return w;
  };
  return {{"l_cls_fb", only(true, false, false, false)},
          {"l_cls_ac", only(false, true, false, false)},
          {"l_g", only(false, false, true, false)},
          {"l_mse", only(false, false, false, true)},
          {"total", only(true, true, true, true)}};
}

}  // namespace verify_detail

/// Gradient checks for every model-level loss plus the weighted logistic
/// loss on its own input. Each result names the worst parameter tensor.
inline std::vector<CheckResult> gradient_checks(const VerifyOptions& opt) {
  using namespace verify_detail;
  std::vector<CheckResult> out;
  ModelHyper hyper;
  hyper.num_classes = 3;
  hyper.feature_dim = 4;
  hyper.hidden = 8;

  for (const auto& sel : loss_selectors()) {
    out.push_back(timed(std::string("grad.") + sel.name, [&](CheckResult& r) {
      double worst = 0.0;
      std::string worst_block = "-";
      for (std::size_t i = 0; i < opt.grad_instances; ++i) {
        SplitMix64 rng(mix_seed(opt.seed, hash_tag("grad") + i));
        const auto params = init_model(hyper, rng.next());
        const auto features = make_stream_features(random_matrix(rng, hyper.feature_dim, 8, 1.0),
                                                   random_matrix(rng, hyper.feature_dim, 8, 1.0));
        const auto label = random_label(rng, hyper.num_classes);
        const auto frozen = random_selections(rng, 8);
        ModelParams grad = zeros_like(params);
        video_objective(params, features, label, sel.weights, &grad, &frozen);
        if (opt.gradient_fault) opt.gradient_fault(sel.name, grad);
        const auto point = flatten(params);
        const auto analytic = flatten(grad);
        ModelParams probe = params;
        auto value = [&](std::span<const double> x) {
          unflatten(x, probe);
          return video_objective(probe, features, label, sel.weights, nullptr, &frozen).parts.total;
        };
        const auto errors = grad_check_errors(value, point, analytic, opt.grad_step);
        for (const auto& b : block_spans(params)) {
          for (std::size_t k = b.offset; k < b.offset + b.size; ++k) {
            if (errors[k] > worst) {
              worst = errors[k];
              worst_block = b.name;
            }
          }
        }
      }
      r.passed = worst <= opt.grad_tolerance;
      r.detail = "max rel err " + fmt(worst) + " at " + worst_block + " over " +
                 std::to_string(opt.grad_instances) + " instances";
    }));
  }

  out.push_back(timed("grad.l_r", [&](CheckResult& r) {
    double worst = 0.0;
    for (std::size_t i = 0; i < opt.grad_instances; ++i) {
      SplitMix64 rng(mix_seed(opt.seed, hash_tag("grad.l_r") + i));
      const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 10));
      std::vector<double> p(n), q(n);
      for (std::size_t k = 0; k < n; ++k) {
        p[k] = rng.uniform(0.02, 0.98);
        q[k] = rng.uniform() < 0.5 ? 1.0 : 0.0;
      }
      const auto analytic = weighted_logistic_with_grad(p, q).grad;
      auto value = [&](std::span<const double> x) { return weighted_logistic(x, q); };
      worst = std::max(worst, grad_check(value, p, analytic, opt.grad_step));
    }
    r.passed = worst <= opt.grad_tolerance;
    r.detail = "max rel err " + fmt(worst) + " at l_r.input";
  }));
  return out;
}

inline std::vector<CheckResult> oracle_checks(const VerifyOptions& opt) {
  using namespace verify_detail;
  std::vector<CheckResult> out;

  out.push_back(timed("oracle.oic", [&](CheckResult& r) {
    std::size_t mismatches = 0, shift_failures = 0;
    for (std::size_t i = 0; i < opt.oracle_trials; ++i) {
      SplitMix64 rng(mix_seed(opt.seed, hash_tag("oic") + i));
      const auto T = static_cast<std::size_t>(rng.uniform_int(1, 40));
      std::vector<double> v(T);
      for (double& x : v) x = rng.uniform(-1.0, 2.0);
      const auto s = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(T) - 1));
      const auto e = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(s) + 1,
                                                               static_cast<std::int64_t>(T)));
      const double got = oic_score(s, e, v);
      if (got != reference::oic_score(s, e, v)) ++mismatches;
      const double c = rng.uniform(-3.0, 3.0);
      std::vector<double> shifted(v);
      for (double& x : shifted) x += c;
      const bool has_outer = s > 0 || e < T;
      const double expect = has_outer ? got : got + c;
      if (std::abs(oic_score(s, e, shifted) - expect) > 1e-9) ++shift_failures;
    }
    r.passed = mismatches == 0 && shift_failures == 0;
    r.detail = std::to_string(mismatches) + " mismatches, " + std::to_string(shift_failures) +
               " shift violations over " + std::to_string(opt.oracle_trials);
  }));

  out.push_back(timed("oracle.ap", [&](CheckResult& r) {
    std::size_t mismatches = 0, monotone_failures = 0;
    double worst = 0.0;
    const auto grid = thumos_grid();
    for (std::size_t i = 0; i < opt.oracle_trials; ++i) {
      SplitMix64 rng(mix_seed(opt.seed, hash_tag("ap") + i));
      const std::string vids[] = {"a", "b"};
      std::vector<GroundTruthSegment> gts;
      const auto ng = rng.uniform_int(1, 4);
      for (std::int64_t g = 0; g < ng; ++g) {
        const auto s = static_cast<std::size_t>(rng.uniform_int(0, 15));
        gts.push_back({vids[rng.uniform_int(0, 1)], 1, s, s + static_cast<std::size_t>(rng.uniform_int(1, 6))});
      }
      std::vector<VideoDetection> dets;
      const auto nd = rng.uniform_int(0, 6);
      for (std::int64_t d = 0; d < nd; ++d) {
        const auto s = static_cast<std::size_t>(rng.uniform_int(0, 15));
        // Coarse scores so ties occur.
        const double score = static_cast<double>(rng.uniform_int(0, 4)) / 4.0;
        dets.push_back({vids[rng.uniform_int(0, 1)],
                        {1, s, s + static_cast<std::size_t>(rng.uniform_int(1, 6)), score}});
      }
      std::optional<double> prev;
      for (double thr : grid) {
        const auto a = average_precision(dets, gts, thr);
        const auto b = reference::average_precision(dets, gts, thr);
        const double diff = std::abs(*a - *b);
        worst = std::max(worst, diff);
        if (diff > 1e-12) ++mismatches;
        if (prev && *a > *prev + 1e-12) ++monotone_failures;
        prev = a;
      }
      const auto rep = map_report(dets, gts, grid, 1);
      for (std::size_t k = 1; k < rep.map.size(); ++k) {
        if (*rep.map[k] > *rep.map[k - 1] + 1e-12) ++monotone_failures;
      }
    }
    r.passed = mismatches == 0 && monotone_failures == 0;
    r.detail = std::to_string(mismatches) + " mismatches (max diff " + fmt(worst) + "), " +
               std::to_string(monotone_failures) + " monotonicity violations";
  }));

  out.push_back(timed("oracle.nms", [&](CheckResult& r) {
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < opt.oracle_trials; ++i) {
      SplitMix64 rng(mix_seed(opt.seed, hash_tag("nms") + i));
      std::vector<Detection> dets;
      const auto nd = rng.uniform_int(0, 8);
      for (std::int64_t d = 0; d < nd; ++d) {
        const auto s = static_cast<std::size_t>(rng.uniform_int(0, 12));
        dets.push_back({1, s, s + static_cast<std::size_t>(rng.uniform_int(1, 6)),
                        static_cast<double>(rng.uniform_int(0, 3))});
      }
      const double thr = rng.uniform(0.1, 0.9);
      if (nms(dets, thr) != reference::nms(dets, thr)) ++mismatches;
    }
    r.passed = mismatches == 0;
    r.detail = std::to_string(mismatches) + " mismatches over " + std::to_string(opt.oracle_trials);
  }));

  out.push_back(timed("oracle.runs", [&](CheckResult& r) {
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < opt.oracle_trials; ++i) {
      SplitMix64 rng(mix_seed(opt.seed, hash_tag("runs") + i));
      std::vector<double> seq(static_cast<std::size_t>(rng.uniform_int(0, 16)));
      for (double& x : seq) x = static_cast<double>(rng.uniform_int(0, 4)) / 4.0;
      const double thr = static_cast<double>(rng.uniform_int(0, 4)) / 4.0;
      std::vector<std::pair<std::size_t, std::size_t>> got;
      for (const auto& p : threshold_proposals(seq, thr)) got.emplace_back(p.start, p.end);
      if (got != reference::maximal_runs(seq, thr)) ++mismatches;
    }
    r.passed = mismatches == 0;
    r.detail = std::to_string(mismatches) + " mismatches over " + std::to_string(opt.oracle_trials);
  }));
  return out;
}

/// Identities and range invariants over random forward passes.
inline std::vector<CheckResult> forward_checks(const VerifyOptions& opt) {
  using namespace verify_detail;
  struct Tally {
    std::size_t violations = 0;
    double worst = 0.0;
  };
  Tally mean_identity, offset_zero, partition, latent, att_fg, att_c, v2;
  const auto t0 = std::chrono::steady_clock::now();
  std::string failure;
  try {
    for (std::size_t i = 0; i < opt.forward_passes; ++i) {
      SplitMix64 rng(mix_seed(opt.seed, hash_tag("forward") + i));
      ModelHyper h;
      h.num_classes = static_cast<std::size_t>(rng.uniform_int(1, 5));
      h.feature_dim = static_cast<std::size_t>(rng.uniform_int(2, 12));
      h.hidden = static_cast<std::size_t>(rng.uniform_int(4, 24));
      const auto T = static_cast<std::size_t>(rng.uniform_int(8, 48));
      const auto params = init_model(h, rng.next());
      const double scale = rng.uniform(0.5, 3.0);
      const auto features = make_stream_features(random_matrix(rng, h.feature_dim, T, scale),
                                                 random_matrix(rng, h.feature_dim, T, scale));
      const auto out = forward(features, params);

      const std::pair<const Tensor2D*, const FBStreamOutputs*> streams[] = {
          {&features.rgb, &out.fb.rgb}, {&features.flow, &out.fb.flow}};
      for (const auto& [F, fb] : streams) {
        for (std::size_t d = 0; d < F->rows(); ++d) {
          double mean = 0.0;
          for (std::size_t t = 0; t < T; ++t) mean += (*F)(d, t);
          mean /= static_cast<double>(T);
          const double err = std::abs(fb->f_fg[d] + fb->f_bg[d] - mean);
          mean_identity.worst = std::max(mean_identity.worst, err);
          if (err > 1e-12) ++mean_identity.violations;
        }
      }

      std::vector<bool> in_index(T, false);
      for (std::size_t t : out.ac.fg_index.indices) in_index[t] = true;
      for (std::size_t n = 0; n < out.ac.offset.rows(); ++n) {
        for (std::size_t t = 0; t < T; ++t) {
          if (!in_index[t] && out.ac.offset(n, t) != 0.0) ++offset_zero.violations;
        }
      }

      const auto sets = collect_snippet_sets(out.fb.sap, out.ac.att.action, {});
      std::vector<std::size_t> merged(sets.action);
      merged.insert(merged.end(), sets.context.begin(), sets.context.end());
      std::sort(merged.begin(), merged.end());
      const bool disjoint = std::adjacent_find(merged.begin(), merged.end()) == merged.end();
      if (merged != sets.fg || !disjoint) ++partition.violations;

      const double c_lo = sigmoid(-1.0), c_hi = sigmoid(1.0);
      for (const auto* s : {&out.ac.rgb, &out.ac.flow}) {
        for (const auto* lat : {&s->pos.value, &s->neg.value}) {
          for (double v : *lat) {
            if (!(v > 0.0 && v < 1.0)) ++latent.violations;
          }
        }
        for (double v : s->att.fg) {
          if (!(v > 0.5)) ++att_fg.violations;
        }
        for (double v : s->att.context) {
          if (!(v > c_lo && v < c_hi)) ++att_c.violations;
        }
      }
      const auto prob = softmax_columns(out.fb.scp);
      for (std::size_t n = 1; n <= h.num_classes; ++n) {
        for (double v : corrected_sequence(prob, out.ac.offset, static_cast<int>(n), Scoring::S2)) {
          if (!(v > -1.0 && v < 2.0)) ++v2.violations;
        }
      }
    }
  } catch (const std::exception& e) {
    failure = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto make = [&](const std::string& name, const Tally& t, const std::string& extra = "") {
    CheckResult r{name, failure.empty() && t.violations == 0, "", secs};
    r.detail = failure.empty() ? std::to_string(t.violations) + " violations over " +
                                     std::to_string(opt.forward_passes) + " passes" + extra
                               : failure;
    return r;
  };
  return {make("identity.fg_bg_mean", mean_identity, ", max err " + fmt(mean_identity.worst)),
          make("identity.offset_outside_index", offset_zero),
          make("identity.set_partition", partition),
          make("range.latent", latent),
          make("range.att_fg", att_fg),
          make("range.att_c", att_c),
          make("range.v2", v2)};
}

inline std::vector<CheckResult> run_verification(const VerifyOptions& opt = {}) {
  std::vector<CheckResult> out = gradient_checks(opt);
  for (auto& r : oracle_checks(opt)) out.push_back(std::move(r));
  for (auto& r : forward_checks(opt)) out.push_back(std::move(r));
  return out;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

inline std::string format_results(const std::vector<CheckResult>& results) {
  std::string out;
  char line[256];
  for (const auto& r : results) {
    std::snprintf(line, sizeof(line), "%-30s %-4s %8.2fs  ", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                  r.seconds);
    out += line + r.detail + "\n";
  }
  return out;
}

}  // namespace acsloc
