// acsloc: synth | train | infer | localize | eval | verify

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acsloc/pipeline.hpp"

namespace {

struct Args {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> variant;
  std::optional<std::string> grid;
  std::optional<std::string> detections;
  std::optional<std::string> report;
  bool resume = false;
};

acsloc::RunConfig resolve(const Args& a) {
  std::vector<std::string> ov = a.overrides;
  if (a.out) ov.push_back("out=" + *a.out);
  if (a.seed) ov.push_back("seed=" + std::to_string(*a.seed));
  if (a.variant) ov.push_back("localize.variant=" + std::to_string(*a.variant));
  if (a.grid) ov.push_back("eval.grid=" + *a.grid);
  if (a.config.empty()) {
    acsloc::RunConfig cfg;
    acsloc::apply_overrides(cfg, ov);
    cfg.validate();
    return cfg;
  }
  return acsloc::load_run_config(a.config, ov);
}

acsloc::fs::path detections_path(const Args& a, const acsloc::RunConfig& cfg) {
  return a.detections ? acsloc::fs::path(*a.detections) : cfg.out_dir() / acsloc::files::kDetections;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised temporal action localization with action-context separation"};
  app.require_subcommand(1);
  Args args;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config,-c", args.config, "run configuration file");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--set", args.overrides, "override a config key: section.key=value")->take_all();
    sub->add_option("--out", args.out, "output directory (overrides `out`)");
    sub->add_option("--seed", args.seed, "seed (overrides `seed`)");
  };

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  common(synth, true);
  auto* train = app.add_subcommand("train", "train on the train split");
  common(train, true);
  train->add_flag("--resume", args.resume, "continue from checkpoint.bin in the output directory");
  auto* infer = app.add_subcommand("infer", "dump model outputs for the evaluation split");
  common(infer, true);
  auto* localize = app.add_subcommand("localize", "generate detections from dumps");
  common(localize, true);
  localize->add_option("--variant", args.variant, "proposal/scoring preset")->check(CLI::Range(0, 5));
  localize->add_option("--detections", args.detections, "output path (default <out>/detections.jsonl)");
  auto* eval = app.add_subcommand("eval", "evaluate detections against ground truth");
  common(eval, true);
  eval->add_option("--grid", args.grid, "tIoU grid")->check(CLI::IsMember({"thumos", "anet"}));
  eval->add_option("--detections", args.detections, "input path (default <out>/detections.jsonl)");
  eval->add_option("--report", args.report, "report path (default <out>/eval_report.json)");
  auto* verify = app.add_subcommand("verify", "run the built-in verification suite");
  common(verify, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : acsloc::kExitConfig;
  }

  return acsloc::guarded(
      [&]() -> int {
        const auto cfg = resolve(args);
        if (synth->parsed()) {
          acsloc::cmd_synth(cfg, std::cout);
        } else if (train->parsed()) {
          acsloc::cmd_train(cfg, std::cout, args.resume);
        } else if (infer->parsed()) {
          acsloc::cmd_infer(cfg, std::cout);
        } else if (localize->parsed()) {
          acsloc::cmd_localize(cfg, detections_path(args, cfg), std::cout);
        } else if (eval->parsed()) {
          const auto report = args.report ? acsloc::fs::path(*args.report)
                                          : cfg.out_dir() / acsloc::files::kReport;
          acsloc::cmd_eval(cfg, detections_path(args, cfg), report, std::cout);
        } else if (verify->parsed()) {
          return acsloc::cmd_verify(std::cout) ? acsloc::kExitOk : acsloc::kExitVerifyFailed;
        }
        return acsloc::kExitOk;
      },
      std::cerr);
}
