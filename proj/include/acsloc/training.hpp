#pragma once

// Training loop, checkpoint container, loss history and inference dumps.
//
// Checkpoint layout (all integers and doubles little-endian):
//   "ACSCKPT1"                          8 bytes
//   u32 version (1), u64 config hash, u32 epoch
//   u32 N, D, H, kernel; f64 alpha, theta_h, theta_l
//   u32 block count; per block: u32 name length, name, u32 count, count x f64
//   f64 lr, beta1, beta2, eps; u64 step; u32 has moments;
//     per block (when present): count x f64 first moment, count x f64 second moment
//   u32 history rows; per row: f64 l_cls_fb, l_cls_ac, l_g, l_mse, total

#include <atomic>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "acsloc/data.hpp"
#include "acsloc/localization.hpp"
#include "acsloc/losses.hpp"
#include "acsloc/model.hpp"

namespace acsloc {

struct TrainConfig {
  ModelHyper model;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double lambda = 1.0;
  std::uint64_t seed = 42;
  std::size_t checkpoint_interval = 0;  // 0: only at the end
  bool use_fb_loss = true;
  bool use_ac_loss = true;
  bool use_guidance_loss = true;
  bool use_mse_loss = true;
  std::size_t fb_warmup_epochs = 0;  // epochs that optimize the FB loss alone
  std::size_t threads = 0;           // 0: ACSLOC_THREADS or hardware concurrency

  void validate() const {
    model.validate();
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
    if (lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
    if (!use_fb_loss && !use_ac_loss && !use_guidance_loss && !use_mse_loss) {
      throw ConfigError("train: loss toggles disable every loss");
    }
  }

  LossWeights weights(std::size_t epoch) const {
    LossWeights w;
    w.lambda = lambda;
    w.use_fb = use_fb_loss;
    const bool warm = epoch < fb_warmup_epochs;
    w.use_ac = use_ac_loss && !warm;
    w.use_guidance = use_guidance_loss && !warm;
    w.use_mse = use_mse_loss && !warm;
    return w;
  }

  /// Hash of everything that shapes the trajectory except the epoch count,
  /// so a run can be resumed with a larger budget.
  std::uint64_t hash() const {
    std::ostringstream s;
    s.precision(17);
    s << model.num_classes << ' ' << model.feature_dim << ' ' << model.hidden << ' '
      << model.kernel_size << ' ' << model.alpha << ' ' << model.theta_h << ' ' << model.theta_l
      << ' ' << batch_size << ' ' << learning_rate << ' ' << lambda << ' ' << seed << ' '
      << use_fb_loss << use_ac_loss << use_guidance_loss << use_mse_loss << ' '
      << fb_warmup_epochs;
    return hash_tag(s.str());
  }
};

struct Checkpoint {
  ModelParams params;
  OptimizerState optimizer;
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t config_hash = 0;
  std::vector<LossBreakdown> history;  // per-epoch mean over videos

  bool operator==(const Checkpoint&) const = default;
};

inline std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ACSLOC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) across up to `workers` threads. Work item i
/// always goes to worker i % workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(mix_seed(mix_seed(seed, hash_tag("shuffle")), epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

inline void add_into(ModelParams& acc, const ModelParams& g) {
  std::vector<std::span<const double>> src;
  for_each_block(g, [&](const std::string&, std::span<const double> b) { src.push_back(b); });
  std::size_t k = 0;
  for_each_block(acc, [&](const std::string&, std::span<double> b) {
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += src[k][i];
    ++k;
  });
}

inline void check_finite(const LossBreakdown& l, const std::string& video_id) {
  const std::pair<const char*, double> parts[] = {{"l_cls_fb", l.l_cls_fb}, {"l_cls_ac", l.l_cls_ac},
                                                  {"l_g", l.l_g},           {"l_mse", l.l_mse},
                                                  {"total", l.total}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite loss component " + std::string(name) + " on video " + video_id);
    }
  }
}

struct TrainHooks {
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(std::size_t epoch, const LossBreakdown&)> on_epoch;
};

inline Checkpoint fresh_checkpoint(const TrainConfig& cfg) {
  Checkpoint ck;
  ck.params = init_model(cfg.model, mix_seed(cfg.seed, hash_tag("init")));
  ck.optimizer.learning_rate = cfg.learning_rate;
  ck.config_hash = cfg.hash();
  return ck;
}

/// Trains from scratch, or continues `resume` up to cfg.epochs. The result
/// depends only on (videos, cfg): worker count never changes the bits.
inline Checkpoint train(const std::vector<VideoData>& videos, const TrainConfig& cfg,
                        const Checkpoint* resume = nullptr, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (videos.empty()) throw ContractError("train: no training videos");
  Checkpoint ck = resume ? *resume : fresh_checkpoint(cfg);
  if (ck.config_hash != cfg.hash()) throw ConfigError("train: checkpoint was produced by a different config");
  for (const auto& v : videos) {
    if (v.features.dim() != cfg.model.feature_dim || v.label.num_classes != cfg.model.num_classes) {
      throw DimensionError("train: video " + v.record->video_id + " does not match model dimensions");
    }
  }
  const std::size_t workers = worker_count(cfg.threads);
  const ModelParams zero = zeros_like(ck.params);

  for (std::size_t epoch = ck.epoch; epoch < cfg.epochs; ++epoch) {
    const LossWeights weights = cfg.weights(epoch);
    const auto order = epoch_order(videos.size(), cfg.seed, epoch);
    LossBreakdown epoch_sum;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const std::size_t nb = b1 - b0;
      std::vector<ModelParams> grads(nb, zero);
      std::vector<LossBreakdown> losses(nb);
      parallel_for(nb, workers, [&](std::size_t i) {
        const auto& v = videos[order[b0 + i]];
        losses[i] = video_objective(ck.params, v.features, v.label, weights, &grads[i]).parts;
      });
      ModelParams total = zero;
      for (std::size_t i = 0; i < nb; ++i) {
        check_finite(losses[i], videos[order[b0 + i]].record->video_id);
        add_into(total, grads[i]);
        epoch_sum += losses[i];
      }
      const double inv = 1.0 / static_cast<double>(nb);
      std::vector<std::span<double>> pblocks;
      std::vector<std::span<const double>> gblocks;
      for_each_block(total, [&](const std::string&, std::span<double> b) {
        for (double& x : b) x *= inv;
        gblocks.push_back(b);
      });
      for_each_block(ck.params, [&](const std::string&, std::span<double> b) { pblocks.push_back(b); });
      optimizer_step(pblocks, gblocks, ck.optimizer);
    }
    const double inv_n = 1.0 / static_cast<double>(videos.size());
    LossBreakdown mean{epoch_sum.l_cls_fb * inv_n, epoch_sum.l_cls_ac * inv_n, epoch_sum.l_g * inv_n,
                       epoch_sum.l_mse * inv_n, epoch_sum.total * inv_n};
    ck.history.push_back(mean);
    ck.epoch = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(epoch, mean);
    if (hooks.on_checkpoint && cfg.checkpoint_interval > 0 && ck.epoch % cfg.checkpoint_interval == 0 &&
        ck.epoch < cfg.epochs) {
      hooks.on_checkpoint(ck);
    }
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace detail {

inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}
  std::uint32_t u32() {
    need(4);
    const auto v = get_u32(bytes_, pos_);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw TruncatedError(what_ + ": truncated at byte " + std::to_string(pos_) + ", need " +
                           std::to_string(n) + " more of " + std::to_string(bytes_.size()));
    }
  }
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string buf = "ACSCKPT1";
  detail::put_u32(buf, 1);
  detail::put_u64(buf, ck.config_hash);
  detail::put_u32(buf, static_cast<std::uint32_t>(ck.epoch));
  const auto& h = ck.params.hyper;
  detail::put_u32(buf, static_cast<std::uint32_t>(h.num_classes));
  detail::put_u32(buf, static_cast<std::uint32_t>(h.feature_dim));
  detail::put_u32(buf, static_cast<std::uint32_t>(h.hidden));
  detail::put_u32(buf, static_cast<std::uint32_t>(h.kernel_size));
  detail::put_f64(buf, h.alpha);
  detail::put_f64(buf, h.theta_h);
  detail::put_f64(buf, h.theta_l);
  std::vector<std::pair<std::string, std::span<const double>>> blocks;
  for_each_block(ck.params, [&](const std::string& name, std::span<const double> b) {
    blocks.emplace_back(name, b);
  });
  detail::put_u32(buf, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& [name, b] : blocks) {
    detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    detail::put_u32(buf, static_cast<std::uint32_t>(b.size()));
    for (double v : b) detail::put_f64(buf, v);
  }
  const auto& o = ck.optimizer;
  detail::put_f64(buf, o.learning_rate);
  detail::put_f64(buf, o.beta1);
  detail::put_f64(buf, o.beta2);
  detail::put_f64(buf, o.epsilon);
  detail::put_u64(buf, o.step);
  const bool has_moments = !o.first_moment.empty();
  detail::put_u32(buf, has_moments ? 1 : 0);
  if (has_moments) {
    for (std::size_t k = 0; k < o.first_moment.size(); ++k) {
      for (double v : o.first_moment[k]) detail::put_f64(buf, v);
      for (double v : o.second_moment[k]) detail::put_f64(buf, v);
    }
  }
  detail::put_u32(buf, static_cast<std::uint32_t>(ck.history.size()));
  for (const auto& l : ck.history) {
    for (double v : {l.l_cls_fb, l.l_cls_ac, l.l_g, l.l_mse, l.total}) detail::put_f64(buf, v);
  }
  return buf;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  detail::Reader r(bytes, what);
  if (r.str(8) != "ACSCKPT1") throw BadMagicError(what + ": bad magic");
  if (r.u32() != 1) throw BadMagicError(what + ": unsupported version");
  Checkpoint ck;
  ck.config_hash = r.u64();
  ck.epoch = r.u32();
  ModelHyper h;
  h.num_classes = r.u32();
  h.feature_dim = r.u32();
  h.hidden = r.u32();
  h.kernel_size = r.u32();
  h.alpha = r.f64();
  h.theta_h = r.f64();
  h.theta_l = r.f64();
  ck.params = make_model(h);
  const std::uint32_t nblocks = r.u32();
  std::vector<std::size_t> sizes;
  std::size_t k = 0;
  for_each_block(ck.params, [&](const std::string& name, std::span<double> b) {
    if (k++ >= nblocks) throw FeatureShapeError(what + ": too few parameter blocks");
    const auto len = r.u32();
    if (r.str(len) != name) throw FeatureShapeError(what + ": unexpected block, wanted " + name);
    if (r.u32() != b.size()) throw FeatureShapeError(what + ": size mismatch for " + name);
    for (double& v : b) v = r.f64();
    sizes.push_back(b.size());
  });
  if (k != nblocks) throw FeatureShapeError(what + ": too many parameter blocks");
  auto& o = ck.optimizer;
  o.learning_rate = r.f64();
  o.beta1 = r.f64();
  o.beta2 = r.f64();
  o.epsilon = r.f64();
  o.step = r.u64();
  if (r.u32()) {
    for (std::size_t n : sizes) {
      std::vector<double> m(n), v(n);
      for (double& x : m) x = r.f64();
      for (double& x : v) x = r.f64();
      o.first_moment.push_back(std::move(m));
      o.second_moment.push_back(std::move(v));
    }
  }
  const std::uint32_t rows = r.u32();
  for (std::uint32_t i = 0; i < rows; ++i) {
    LossBreakdown l;
    l.l_cls_fb = r.f64();
    l.l_cls_ac = r.f64();
    l.l_g = r.f64();
    l.l_mse = r.f64();
    l.total = r.f64();
    ck.history.push_back(l);
  }
  if (!r.done()) throw FeatureShapeError(what + ": trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
  detail::write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFileError("missing checkpoint " + path.string());
  return deserialize_checkpoint(detail::read_file(path), path.string());
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string loss_history_csv(const std::vector<LossBreakdown>& history) {
  std::string out = "epoch,l_cls_fb,l_cls_ac,l_g,l_mse,total\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& l = history[e];
    out += std::to_string(e + 1);
    for (double v : {l.l_cls_fb, l.l_cls_ac, l.l_g, l.l_mse, l.total}) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference dumps

inline std::vector<ModelOutputs> infer(const std::vector<VideoData>& videos, const ModelParams& params,
                                       std::size_t threads = 0) {
  for (const auto& v : videos) {
    if (v.features.dim() != params.hyper.feature_dim || v.label.num_classes != params.hyper.num_classes) {
      throw DimensionError("infer: video " + (v.record ? v.record->video_id : std::string("?")) +
                           " does not match checkpoint dimensions");
    }
  }
  std::vector<ModelOutputs> out(videos.size());
  parallel_for(videos.size(), worker_count(threads),
               [&](std::size_t i) { out[i] = forward(videos[i].features, params); });
  return out;
}

namespace detail {

inline nlohmann::ordered_json rows_json(const Tensor2D& t) {
  auto j = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    j.push_back(std::vector<double>(t.row(r).begin(), t.row(r).end()));
  }
  return j;
}

inline Tensor2D rows_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw SchemaError(what + ": expected an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : 0;
  Tensor2D t(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = j[r].get<std::vector<double>>();
    if (row.size() != cols) throw SchemaError(what + ": ragged rows");
    std::copy(row.begin(), row.end(), t.row(r).begin());
  }
  return t;
}

}  // namespace detail

/// One JSON document per video holding every FB/AC output localization and
/// the diagnostics consume.
inline nlohmann::ordered_json dump_to_json(const std::string& video_id, const ModelOutputs& o) {
  nlohmann::ordered_json j;
  j["video_id"] = video_id;
  j["T"] = o.fb.sap.size();
  j["N"] = o.ac.offset.rows();
  j["sap"] = o.fb.sap;
  j["sap_rgb"] = o.fb.rgb.sap;
  j["sap_flow"] = o.fb.flow.sap;
  j["scp"] = detail::rows_json(o.fb.scp);
  j["p_fg"] = o.fb.p_fg;
  j["lat_pos_rgb"] = o.ac.rgb.pos.value;
  j["lat_neg_rgb"] = o.ac.rgb.neg.value;
  j["lat_pos_flow"] = o.ac.flow.pos.value;
  j["lat_neg_flow"] = o.ac.flow.neg.value;
  j["att_fg_rgb"] = o.ac.rgb.att.fg;
  j["att_a_rgb"] = o.ac.rgb.att.action;
  j["att_c_rgb"] = o.ac.rgb.att.context;
  j["att_fg_flow"] = o.ac.flow.att.fg;
  j["att_a_flow"] = o.ac.flow.att.action;
  j["att_c_flow"] = o.ac.flow.att.context;
  j["att_fg"] = o.ac.att.fg;
  j["att_a"] = o.ac.att.action;
  j["att_c"] = o.ac.att.context;
  j["fg_index"] = o.ac.fg_index.indices;
  j["fg_fallback"] = o.ac.fg_index.fallback;
  j["acp"] = detail::rows_json(o.ac.pred.acp);
  j["offset"] = detail::rows_json(o.ac.offset);
  return j;
}

/// Per-video quantities read back from a dump.
struct VideoDump {
  std::string video_id;
  LocalizationInputs loc;
  std::vector<double> att_fg, att_c;
  std::vector<double> lat_pos_rgb, lat_neg_rgb, lat_pos_flow, lat_neg_flow;
  std::vector<double> att_fg_rgb, att_fg_flow, att_c_rgb, att_c_flow;
  std::vector<std::size_t> fg_index;
};

inline VideoDump dump_from_json(const nlohmann::json& j) {
  try {
    VideoDump d;
    d.video_id = j.at("video_id").get<std::string>();
    d.loc.sap = j.at("sap").get<std::vector<double>>();
    d.loc.att_a = j.at("att_a").get<std::vector<double>>();
    d.loc.scp = detail::rows_from_json(j.at("scp"), d.video_id + " scp");
    d.loc.offset = detail::rows_from_json(j.at("offset"), d.video_id + " offset");
    d.loc.p_fg = j.at("p_fg").get<std::vector<double>>();
    d.att_fg = j.at("att_fg").get<std::vector<double>>();
    d.att_c = j.at("att_c").get<std::vector<double>>();
    d.lat_pos_rgb = j.at("lat_pos_rgb").get<std::vector<double>>();
    d.lat_neg_rgb = j.at("lat_neg_rgb").get<std::vector<double>>();
    d.lat_pos_flow = j.at("lat_pos_flow").get<std::vector<double>>();
    d.lat_neg_flow = j.at("lat_neg_flow").get<std::vector<double>>();
    d.att_fg_rgb = j.at("att_fg_rgb").get<std::vector<double>>();
    d.att_fg_flow = j.at("att_fg_flow").get<std::vector<double>>();
    d.att_c_rgb = j.at("att_c_rgb").get<std::vector<double>>();
    d.att_c_flow = j.at("att_c_flow").get<std::vector<double>>();
    d.fg_index = j.at("fg_index").get<std::vector<std::size_t>>();
    const std::size_t T = d.loc.sap.size();
    if (d.loc.att_a.size() != T || d.loc.scp.cols() != T || d.loc.offset.cols() != T ||
        d.loc.scp.rows() != d.loc.offset.rows() + 1 || d.loc.p_fg.size() != d.loc.scp.rows()) {
      throw SchemaError("dump " + d.video_id + ": inconsistent shapes");
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("dump: ") + e.what());
  }
}

inline void write_dump(const fs::path& dir, const std::string& video_id, const ModelOutputs& o) {
  detail::write_file(dir / (video_id + ".json"), dump_to_json(video_id, o).dump() + "\n");
}

inline VideoDump read_dump(const fs::path& dir, const std::string& video_id) {
  const fs::path p = dir / (video_id + ".json");
  if (!fs::exists(p)) throw MissingFileError("missing dump " + p.string());
  try {
    return dump_from_json(nlohmann::json::parse(detail::read_file(p)));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

}  // namespace acsloc
