#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sim2seg/config.hpp"

namespace sim2seg::pipeline {

namespace fs = std::filesystem;

/// SIM2SEG_WORKERS if set, else config.workers, else the logical core count.
int worker_count(const config::PipelineConfig& config);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// is rethrown after all threads stop.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Fresh `<reports>/<YYYYmmdd-HHMMSS>[-k]` directory.
fs::path make_report_dir(const fs::path& reports_root);

InstanceMask resize_nearest(const InstanceMask& mask, int width, int height);

fs::path translation_checkpoint_dir(const config::PipelineConfig& config);
fs::path segmentation_checkpoint_dir(const config::PipelineConfig& config);

/// Returns the manifest path. `seed` overrides scene.seed.
fs::path cmd_gen_data(const config::PipelineConfig& config, std::size_t count,
                      std::optional<std::uint64_t> seed, std::ostream& log);

translation::TranslationModel cmd_train_translate(const config::PipelineConfig& config,
                                                  std::ostream& log);
segmentation::SegmentationModel cmd_train_seg(const config::PipelineConfig& config,
                                              std::ostream& log);

struct InferOutput {
  std::string ref;  // input filename stem
  ImageBuffer input;       // resized RGB U8
  ImageBuffer translated;  // RGB U8 (equals input when translation is skipped)
  ImageBuffer raw_mask;    // generator output, U8
  InstanceMask instances;
};

/// Loaded models for inference; translation is absent when skipped.
struct InferenceModels {
  std::optional<translation::TranslationModel> translation;
  segmentation::SegmentationModel segmentation;
};

/// Loads checkpoints before any work; a missing one throws kMissingArtifact
/// naming the stage.
InferenceModels load_inference_models(const config::PipelineConfig& config, bool skip_translation);

/// resize -> translate -> grayscale -> Sobel -> normalize -> generator -> instances.
InferOutput infer_image(const ImageBuffer& rgb, const std::string& ref,
                        const config::PipelineConfig& config, const InferenceModels& models);

/// Side-by-side input | translated | colorized instances.
ImageBuffer composite(const InferOutput& out);

/// `input` is an image file or a directory of images. Writes
/// <stem>_translated.png, <stem>_raw_mask.png, <stem>_instances.png (16-bit ids)
/// and <stem>_composite.png into out_dir. Unreadable images are skipped and
/// listed in out_dir/skipped.txt.
std::vector<InferOutput> cmd_infer(const config::PipelineConfig& config, const fs::path& input,
                                   const fs::path& out_dir, bool skip_translation,
                                   std::ostream& log);

/// Pairs each ground-truth mask X.png with X.png or X_instances.png in
/// pred_dir. Throws kData when the sets do not line up.
evaluation::EvalReport evaluate_dirs(const config::PipelineConfig& config, const fs::path& pred_dir,
                                     const fs::path& gt_dir, const std::string& label);

/// Writes report.json, report.csv (one row per sample) and table.txt under a fresh report dir
/// and returns that dir.
fs::path cmd_eval(const config::PipelineConfig& config, const fs::path& pred_dir,
                  const fs::path& gt_dir, const std::string& label, std::ostream& log);

struct AblationResult {
  fs::path report_dir;
  evaluation::EvalReport without;
  evaluation::EvalReport with;
  std::string table;
};

/// `labeled_dir` is either a generated dataset (samples/*/rgb.png, mask.png) or
/// a directory with images/ and masks/ sharing file stems. Both checkpoints
/// are loaded before any inference.
AblationResult cmd_ablate(const config::PipelineConfig& config, const fs::path& labeled_dir,
                          std::ostream& log);

}  // namespace sim2seg::pipeline
