#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "acsloc/training.hpp"

using namespace acsloc;
namespace fs = std::filesystem;

namespace {

struct TinySet {
  std::vector<SynthVideo> raw;
  std::vector<VideoData> videos;
};

TinySet tiny_set(std::size_t n, std::size_t dim = 6) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.feature_dim = dim;
  spec.train_videos = n;
  spec.test_videos = 0;
  spec.t_min = 16;
  spec.t_max = 24;
  spec.context_min = 1;
  spec.context_max = 3;
  TinySet s;
  s.raw = generate_videos(spec);
  for (auto& v : s.raw) {
    s.videos.push_back({&v.record, make_stream_features(v.rgb, v.flow),
                        VideoLabel::from_classes(spec.num_classes, v.record.labels)});
  }
  return s;
}

TrainConfig tiny_config(std::size_t epochs = 3) {
  TrainConfig cfg;
  cfg.model.num_classes = 2;
  cfg.model.feature_dim = 6;
  cfg.model.hidden = 8;
  cfg.epochs = epochs;
  cfg.batch_size = 3;
  cfg.learning_rate = 1e-2;
  cfg.threads = 1;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("acsloc_test_training_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Training, Deterministic) {
  const auto set = tiny_set(7);
  const auto a = train(set.videos, tiny_config());
  const auto b = train(set.videos, tiny_config());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.epoch, 3u);
  EXPECT_EQ(a.history.size(), 3u);
  auto other = tiny_config();
  other.seed = 7;
  EXPECT_FALSE(train(set.videos, other).params == a.params);
}

TEST(Training, WorkerCountDoesNotChangeBits) {
  const auto set = tiny_set(7);
  auto one = tiny_config();
  auto three = tiny_config();
  three.threads = 3;
  EXPECT_EQ(train(set.videos, one), train(set.videos, three));
}

TEST(Training, ResumeIsBitExact) {
  const auto set = tiny_set(5);
  const auto full = train(set.videos, tiny_config(4));
  const auto half = train(set.videos, tiny_config(2));
  const auto restored = deserialize_checkpoint(serialize_checkpoint(half));
  EXPECT_EQ(restored, half);
  EXPECT_EQ(train(set.videos, tiny_config(4), &restored), full);

  std::vector<std::size_t> saved;
  auto periodic = tiny_config(4);
  periodic.checkpoint_interval = 1;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](const Checkpoint& ck) { saved.push_back(ck.epoch); };
  train(set.videos, periodic, nullptr, hooks);
  EXPECT_EQ(saved, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(Training, ResumeRejectsDifferentConfig) {
  const auto set = tiny_set(3);
  const auto ck = train(set.videos, tiny_config(1));
  auto changed = tiny_config(2);
  changed.learning_rate = 2e-2;
  EXPECT_THROW(train(set.videos, changed, &ck), ConfigError);
}

TEST(Training, ZeroLambdaIgnoresAuxiliaryLosses) {
  const auto set = tiny_set(5);
  auto zero = tiny_config();
  zero.lambda = 0.0;
  auto off = tiny_config();
  off.use_guidance_loss = false;
  off.use_mse_loss = false;
  const auto a = train(set.videos, zero);
  const auto b = train(set.videos, off);
  EXPECT_EQ(a.params, b.params);
  // The auxiliary losses are still reported.
  EXPECT_GT(a.history.back().l_g + a.history.back().l_mse, 0.0);
  const auto& last = a.history.back();
  EXPECT_NEAR(last.total, last.l_cls_fb + last.l_cls_ac, 1e-12);
}

TEST(Training, SingleVideoLossHalves) {
  auto set = tiny_set(1);
  auto cfg = tiny_config(200);
  cfg.batch_size = 1;
  const auto ck = train(set.videos, cfg);
  EXPECT_LE(ck.history.back().total, 0.5 * ck.history.front().total);
}

TEST(Training, NonFiniteLossNamesComponentAndVideo) {
  auto set = tiny_set(3);
  set.videos[1].features.concat(0, 0) = std::nan("");
  set.videos[1].features.rgb(0, 0) = std::nan("");
  try {
    train(set.videos, tiny_config(1));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("l_cls_fb"), std::string::npos) << msg;
    EXPECT_NE(msg.find(set.raw[1].record.video_id), std::string::npos) << msg;
  }
}

TEST(Training, RejectsBadInputs) {
  const auto set = tiny_set(2);
  EXPECT_THROW(train({}, tiny_config()), ContractError);
  auto cfg = tiny_config();
  cfg.model.feature_dim = 5;
  EXPECT_THROW(train(set.videos, cfg), DimensionError);
  cfg = tiny_config();
  cfg.use_fb_loss = cfg.use_ac_loss = cfg.use_guidance_loss = cfg.use_mse_loss = false;
  EXPECT_THROW(train(set.videos, cfg), ConfigError);
  cfg = tiny_config();
  cfg.lambda = -1.0;
  EXPECT_THROW(train(set.videos, cfg), ConfigError);
}

TEST(Checkpoint, FileRoundTripAndErrors) {
  const auto dir = fresh_dir("ckpt");
  const auto set = tiny_set(3);
  const auto ck = train(set.videos, tiny_config(2));
  save_checkpoint(ck, dir / "model.ckpt");
  EXPECT_EQ(load_checkpoint(dir / "model.ckpt"), ck);
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), MissingFileError);

  const auto bytes = serialize_checkpoint(ck);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), BadMagicError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 5)), TruncatedError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), FeatureShapeError);
}

TEST(Checkpoint, HistoryCsv) {
  const std::vector<LossBreakdown> h{{1.0, 2.0, 0.5, 0.25, 3.75}};
  EXPECT_EQ(loss_history_csv(h), "epoch,l_cls_fb,l_cls_ac,l_g,l_mse,total\n1,1,2,0.5,0.25,3.75\n");
}

TEST(Inference, RepeatableAndInRange) {
  const auto set = tiny_set(4);
  const auto ck = train(set.videos, tiny_config(2));
  const auto a = infer(set.videos, ck.params);
  const auto b = infer(set.videos, ck.params, 2);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ja = dump_to_json(set.raw[i].record.video_id, a[i]).dump();
    EXPECT_EQ(ja, dump_to_json(set.raw[i].record.video_id, b[i]).dump());
    for (double v : a[i].fb.sap) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    for (double v : a[i].ac.att.action) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    for (double v : a[i].ac.offset.flat()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
  auto wrong = tiny_config();
  wrong.model.feature_dim = 4;
  EXPECT_THROW(infer(set.videos, init_model(wrong.model, 1)), DimensionError);
}

TEST(Inference, DumpRoundTrip) {
  const auto dir = fresh_dir("dump");
  const auto set = tiny_set(2);
  const auto params = init_model(tiny_config().model, 5);
  const auto out = infer(set.videos, params);
  const auto& id = set.raw[0].record.video_id;
  write_dump(dir, id, out[0]);
  const auto d = read_dump(dir, id);
  const auto want = localization_inputs(out[0]);
  EXPECT_EQ(d.video_id, id);
  EXPECT_EQ(d.loc.sap, want.sap);
  EXPECT_EQ(d.loc.att_a, want.att_a);
  EXPECT_EQ(d.loc.scp, want.scp);
  EXPECT_EQ(d.loc.offset, want.offset);
  EXPECT_EQ(d.loc.p_fg, want.p_fg);
  EXPECT_EQ(d.fg_index, out[0].ac.fg_index.indices);
  EXPECT_THROW(read_dump(dir, "absent"), MissingFileError);
  std::ofstream(dir / "broken.json") << "{\"video_id\": \"broken\"}";
  EXPECT_THROW(read_dump(dir, "broken"), SchemaError);
}
