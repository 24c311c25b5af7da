#pragma once

// The batch commands behind the command-line tool. Each is a thin,
// deterministic wrapper over one module; all artifacts live under the
// configured output directory with fixed names.

#include <exception>
#include <ostream>
#include <string>
#include <vector>

#include "acsloc/config.hpp"
#include "acsloc/data.hpp"
#include "acsloc/evaluation.hpp"
#include "acsloc/io.hpp"
#include "acsloc/localization.hpp"
#include "acsloc/training.hpp"
#include "acsloc/verify.hpp"

namespace acsloc {

namespace files {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kCheckpoint = "checkpoint.bin";
inline constexpr const char* kDumpDir = "dump";
inline constexpr const char* kDetections = "detections.jsonl";
inline constexpr const char* kReport = "eval_report.json";
inline constexpr const char* kLosses = "losses.csv";
inline constexpr const char* kResolvedConfig = "config.resolved.toml";
}  // namespace files

enum ExitCode : int { kExitOk = 0, kExitVerifyFailed = 1, kExitConfig = 2, kExitIo = 3 };

inline void write_resolved_config(const RunConfig& cfg) {
  detail::write_file(cfg.out_dir() / files::kResolvedConfig, resolved_config_text(cfg));
}

inline DatasetManifest load_run_manifest(const RunConfig& cfg) {
  return load_manifest(cfg.dataset_dir() / files::kManifest);
}

inline SynthStats cmd_synth(const RunConfig& cfg, std::ostream& os) {
  write_resolved_config(cfg);
  const auto m = generate_synthetic(cfg.synth_spec(), cfg.dataset_dir());
  char line[160];
  for (const char* split : {"train", "test"}) {
    const auto s = manifest_stats(m, split);
    std::snprintf(line, sizeof(line),
                  "%-5s videos=%zu instances/video=%.3f non-action=%.3f background-only=%.3f\n", split,
                  s.videos, s.instances_per_video(), s.non_action_fraction(),
                  s.background_only_fraction());
    os << line;
  }
  return manifest_stats(m);
}

/// Trains on the train split. With `resume`, continues from the checkpoint
/// in the output directory.
inline Checkpoint cmd_train(const RunConfig& cfg, std::ostream& os, bool resume = false) {
  write_resolved_config(cfg);
  const auto m = load_run_manifest(cfg);
  const auto videos = load_split(m, "train");
  const auto tc = cfg.train_config(m.num_classes, m.feature_dim);
  const fs::path ckpt_path = cfg.out_dir() / files::kCheckpoint;
  std::optional<Checkpoint> start;
  if (resume) start = load_checkpoint(ckpt_path);
  TrainHooks hooks;
  hooks.on_checkpoint = [&](const Checkpoint& ck) { save_checkpoint(ck, ckpt_path); };
  hooks.on_epoch = [&](std::size_t epoch, const LossBreakdown& l) {
    if ((epoch + 1) % 10 == 0 || epoch + 1 == tc.epochs) {
      char line[160];
      std::snprintf(line, sizeof(line), "epoch %4zu  fb=%.5f ac=%.5f g=%.5f mse=%.5f total=%.5f\n",
                    epoch + 1, l.l_cls_fb, l.l_cls_ac, l.l_g, l.l_mse, l.total);
      os << line << std::flush;
    }
  };
  const auto ck = train(videos, tc, start ? &*start : nullptr, hooks);
  save_checkpoint(ck, ckpt_path);
  detail::write_file(cfg.out_dir() / files::kLosses, loss_history_csv(ck.history));
  return ck;
}

inline void cmd_infer(const RunConfig& cfg, std::ostream& os) {
  write_resolved_config(cfg);
  const auto m = load_run_manifest(cfg);
  const auto ck = load_checkpoint(cfg.out_dir() / files::kCheckpoint);
  const auto videos = load_split(m, cfg.split);
  const auto outputs = infer(videos, ck.params);
  const fs::path dir = cfg.out_dir() / files::kDumpDir;
  for (std::size_t i = 0; i < videos.size(); ++i) write_dump(dir, videos[i].record->video_id, outputs[i]);
  os << "wrote " << videos.size() << " dumps to " << dir.string() << "\n";
}

inline std::vector<VideoDetection> cmd_localize(const RunConfig& cfg, const fs::path& detections_path,
                                                std::ostream& os) {
  write_resolved_config(cfg);
  const auto m = load_run_manifest(cfg);
  const auto variant = cfg.variant_config();
  const fs::path dir = cfg.out_dir() / files::kDumpDir;
  std::vector<VideoDetection> all;
  for (const auto* v : m.split(cfg.split)) {
    const auto dump = read_dump(dir, v->video_id);
    for (const auto& d : generate_detections(dump.loc, variant)) all.push_back({v->video_id, d});
  }
  write_detections(detections_path, all);
  os << "variant #" << cfg.variant << ": " << all.size() << " detections -> " << detections_path.string()
     << "\n";
  return all;
}

/// Snippet-set diagnostics pooled over the split: top-1 accuracy, ground
/// truth proportion, and the localization quality of each set's runs.
inline std::map<std::string, SetDiagnostics> set_diagnostics(const DatasetManifest& m,
                                                             const std::string& split,
                                                             const fs::path& dump_dir,
                                                             const std::vector<double>& grid,
                                                             double nms_tiou) {
  const std::vector<std::string> names = {"fg", "bg", "a", "c", "gt"};
  std::map<std::string, Ratio> top1, proportion;
  std::map<std::string, std::vector<VideoDetection>> dets;
  std::vector<GroundTruthSegment> gts;
  for (const auto* v : m.split(split)) {
    const auto dump = read_dump(dump_dir, v->video_id);
    const auto sets = collect_snippet_sets(dump.loc.sap, dump.loc.att_a, v->segments);
    const auto prob = class_probabilities(dump.loc.scp);
    const std::vector<const std::vector<std::size_t>*> members = {&sets.fg, &sets.bg, &sets.action,
                                                                  &sets.context, &sets.gt};
    for (std::size_t z = 0; z < names.size(); ++z) {
      top1[names[z]] += top1_counts(*members[z], dump.loc.scp, v->labels);
      proportion[names[z]] += proportion_counts(*members[z], prob, v->labels);
      std::vector<bool> mask(dump.loc.sap.size(), false);
      for (std::size_t t : *members[z]) mask[t] = true;
      for (const auto& d : score_agnostic_proposals(dump.loc, mask_proposals(mask), nms_tiou)) {
        dets[names[z]].push_back({v->video_id, d});
      }
    }
    gts.insert(gts.end(), v->segments.begin(), v->segments.end());
  }
  std::map<std::string, SetDiagnostics> out;
  for (const auto& z : names) {
    out[z] = {top1[z].value(), proportion[z].value(),
              map_report(dets[z], gts, grid, static_cast<int>(m.num_classes)).average_map};
  }
  return out;
}

inline EvalReport cmd_eval(const RunConfig& cfg, const fs::path& detections_path, const fs::path& report_path,
                           std::ostream& os) {
  write_resolved_config(cfg);
  const auto m = load_run_manifest(cfg);
  const auto dets = read_detections(detections_path);
  const auto grid = grid_by_name(cfg.grid);
  auto report = map_report(dets, m.ground_truth(cfg.split), grid, static_cast<int>(m.num_classes));
  const fs::path dump_dir = cfg.out_dir() / files::kDumpDir;
  if (fs::is_directory(dump_dir)) {
    report.diagnostics = set_diagnostics(m, cfg.split, dump_dir, grid, cfg.nms_tiou);
  }
  write_report(report_path, report);
  char line[96];
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::snprintf(line, sizeof(line), "mAP@%.2f = %s\n", grid[k],
                  report.map[k] ? format_double(*report.map[k] * 100.0).substr(0, 6).c_str() : "NA");
    os << line;
  }
  os << "average mAP = "
     << (report.average_map ? format_double(*report.average_map * 100.0).substr(0, 6) : std::string("NA"))
     << "\n";
  for (const auto& [name, d] : report.diagnostics) {
    auto show = [](const std::optional<double>& v) {
      return v ? format_double(*v).substr(0, 6) : std::string("NA");
    };
    os << "set " << name << ": top1=" << show(d.top1) << " proportion=" << show(d.proportion)
       << " avg mAP=" << show(d.average_map) << "\n";
  }
  return report;
}

inline bool cmd_verify(std::ostream& os, const VerifyOptions& opt = {}) {
  const auto results = run_verification(opt);
  os << format_results(results);
  const bool ok = all_passed(results);
  os << (ok ? "all checks passed\n" : "verification FAILED\n");
  return ok;
}

/// Runs `fn` and maps failures onto the stable exit codes: 2 for
/// configuration errors, 3 for missing or malformed inputs and I/O failures.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const GenerationError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const SchemaError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DimensionError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitVerifyFailed;
  }
}

}  // namespace acsloc
