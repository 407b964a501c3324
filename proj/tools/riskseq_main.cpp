// riskseq: training-strategy experiments for sparsely-labeled sequences.
//
// Subcommands: exposure, generate, train, finetune, evaluate, sweep,
// xcorr-demo, saliency. All take --config; --seed/--out/--jobs/--strict
// override the corresponding [run] keys. Exit codes: 0 ok, 2 config error,
// 3 data/format error, 4 numerical failure.
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "riskseq/harness.hpp"

using namespace riskseq;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string seed;
  std::string out;
  int jobs = 1;
  bool strict = false;
};

HarnessConfig make_config(const GlobalArgs& g) {
  if (g.config_path.empty()) throw ConfigError("--config is required");
  Config raw = Config::load(g.config_path);
  if (!g.seed.empty()) raw.set("run.seed", g.seed);
  if (!g.out.empty()) raw.set("run.out", g.out);
  if (g.strict) raw.set("run.strict", "true");
  HarnessConfig h = load_harness_config(raw);
  h.jobs = g.jobs;
  return h;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"riskseq: risk-tolerant training for sparsely-labeled sequential data"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "experiment config file")->expected(1);
  app.add_option("--seed", g.seed, "master seed override");
  app.add_option("--out", g.out, "output directory override");
  app.add_option("--jobs", g.jobs, "concurrent sweep cells")->default_val(1);
  app.add_flag("--strict", g.strict, "force strict risk-label policy");

  auto* exposure_cmd = app.add_subcommand("exposure", "emit the inaccuracy-exposure curve CSV");
  auto* generate_cmd = app.add_subcommand("generate", "build and export the configured dataset");
  auto* train_cmd = app.add_subcommand("train", "single training run");
  auto* sweep_cmd = app.add_subcommand("sweep", "risk-level sweep with per-N summary");
  auto* demo_cmd = app.add_subcommand("xcorr-demo", "end-to-end cross-correlation demo");

  std::string checkpoint, images, labels, matrix;
  auto* finetune_cmd = app.add_subcommand("finetune", "fine-tune from a checkpoint");
  finetune_cmd->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on IDX data");
  evaluate_cmd->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  evaluate_cmd->add_option("--images", images, "IDX image file")->required();
  evaluate_cmd->add_option("--labels", labels, "IDX label file")->required();
  auto* saliency_cmd = app.add_subcommand("saliency", "guided-backprop saliency for a matrix");
  saliency_cmd->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  saliency_cmd->add_option("--input", matrix, "matrix file (.xcm)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e); // --help
    app.exit(e);
    return kExitConfig;
  }

  try {
    const HarnessConfig h = make_config(g);
    if (exposure_cmd->parsed()) {
      const auto path = cmd_exposure(h);
      std::printf("wrote %s\n", path.string().c_str());
    } else if (generate_cmd->parsed()) {
      const auto dir = cmd_generate(h);
      std::printf("wrote %s\n", dir.string().c_str());
    } else if (train_cmd->parsed()) {
      const auto dir = cmd_train(h);
      std::printf("wrote %s\n", dir.string().c_str());
    } else if (sweep_cmd->parsed()) {
      const auto out = cmd_sweep(h);
      std::printf("wrote %s\n", out.results_csv.string().c_str());
      std::printf("wrote %s\n", out.summary_csv.string().c_str());
    } else if (demo_cmd->parsed()) {
      const auto dir = cmd_xcorr_demo(h);
      std::printf("wrote %s\n", dir.string().c_str());
    } else if (finetune_cmd->parsed()) {
      const auto dir = cmd_finetune(h, checkpoint);
      std::printf("wrote %s\n", dir.string().c_str());
    } else if (evaluate_cmd->parsed()) {
      const auto path = cmd_evaluate(h, checkpoint, images, labels);
      std::printf("wrote %s\n", path.string().c_str());
    } else if (saliency_cmd->parsed()) {
      const auto path = cmd_saliency(h, checkpoint, matrix);
      std::printf("wrote %s\n", path.string().c_str());
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitData;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
}
