// sim2seg command-line front end.
//
//   sim2seg <gen-data|train-translate|train-seg|infer|eval|ablate> --config <file> [flags]
//
// Exit codes: 0 success, 2 config error, 3 missing artifact, 4 data error,
// 5 training fault, 1 anything else.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "sim2seg/pipeline.hpp"

namespace {

using namespace sim2seg;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kMissingArtifact: return 3;
    case ErrorKind::kData:
    case ErrorKind::kShape:
    case ErrorKind::kDimension:
    case ErrorKind::kDomain: return 4;
    case ErrorKind::kTrainingFault: return 5;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sim-to-real instance segmentation pipeline"};
  app.require_subcommand(0, 1);
  std::string config_path;
  bool print_default = false;
  app.add_flag("--print-default-config", print_default, "Print a complete default config and exit");

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Pipeline config (JSON)")->required();
  };

  std::size_t count = 0;
  std::optional<std::uint64_t> seed;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  with_config(gen);
  gen->add_option("--count", count, "Number of samples")->required();
  gen->add_option("--seed", seed, "Overrides scene.seed");

  auto* train_t = app.add_subcommand("train-translate", "Train the real-to-sim translation model");
  with_config(train_t);
  auto* train_s = app.add_subcommand("train-seg", "Train the mask generator");
  with_config(train_s);

  std::string input, out_dir;
  bool skip_translation = false;
  auto* infer = app.add_subcommand("infer", "Segment an image or a directory of images");
  with_config(infer);
  infer->add_option("--input", input, "Image file or directory")->required();
  infer->add_option("--out", out_dir, "Output directory")->required();
  infer->add_flag("--skip-translation", skip_translation, "Bypass the translation stage");

  std::string pred_dir, gt_dir, label = "condition";
  auto* eval = app.add_subcommand("eval", "Score predicted instance masks");
  with_config(eval);
  eval->add_option("--pred", pred_dir, "Directory of predicted masks")->required();
  eval->add_option("--gt", gt_dir, "Directory of ground-truth masks")->required();
  eval->add_option("--label", label, "Condition label for the report row");

  std::string labeled_dir;
  auto* ablate = app.add_subcommand("ablate", "Compare with and without translation");
  with_config(ablate);
  ablate->add_option("--data", labeled_dir, "Labeled evaluation set")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; usage mistakes count as configuration errors.
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (print_default) {
    std::cout << config::to_json(config::PipelineConfig{}).dump(2) << "\n";
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  try {
    const auto loaded = config::load_config(config_path);
    for (const auto& s : loaded.defaulted_sections) std::clog << "config: " << s << " uses defaults\n";
    const auto& cfg = loaded.config;
    if (gen->parsed()) {
      pipeline::cmd_gen_data(cfg, count, seed, std::clog);
    } else if (train_t->parsed()) {
      pipeline::cmd_train_translate(cfg, std::clog);
    } else if (train_s->parsed()) {
      pipeline::cmd_train_seg(cfg, std::clog);
    } else if (infer->parsed()) {
      pipeline::cmd_infer(cfg, input, out_dir, skip_translation, std::clog);
    } else if (eval->parsed()) {
      pipeline::cmd_eval(cfg, pred_dir, gt_dir, label, std::clog);
    } else if (ablate->parsed()) {
      pipeline::cmd_ablate(cfg, labeled_dir, std::clog);
    }
  } catch (const Error& e) {
    std::cerr << "sim2seg: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "sim2seg: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
