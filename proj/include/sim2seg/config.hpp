#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sim2seg/evaluation.hpp"
#include "sim2seg/imaging.hpp"
#include "sim2seg/postproc.hpp"
#include "sim2seg/segmentation.hpp"
#include "sim2seg/synthgen.hpp"
#include "sim2seg/translation.hpp"

namespace sim2seg::config {

using nlohmann::json;

struct Paths {
  std::string synth_dataset = "data/synth";
  std::string real_images = "data/real";
  std::string checkpoints = "checkpoints";
  std::string reports = "reports";
};

struct PipelineConfig {
  synthgen::SceneConfig scene;
  imaging::PreprocessSpec preprocess;
  translation::TranslationHyper translation;
  segmentation::SegHyper segmentation;
  postproc::PostprocSpec postproc;
  evaluation::EvalOptions eval;
  Paths paths;
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = logical cores

  /// Empty when every nested config is valid and the paths are distinct.
  std::string check() const;
};

// Serialization. Parsers are strict: unknown keys and missing fields throw
// kConfig naming the offending field (prefixed by `where`).
json to_json(const synthgen::SceneConfig& c);
json to_json(const imaging::PreprocessSpec& p);
json to_json(const translation::TranslationHyper& h);
json to_json(const segmentation::SegHyper& h);
json to_json(const postproc::PostprocSpec& p);
json to_json(const evaluation::EvalOptions& e);
json to_json(const Paths& p);
json to_json(const PipelineConfig& c);

synthgen::SceneConfig scene_config_from_json(const json& j, const std::string& where = "scene");
imaging::PreprocessSpec preprocess_from_json(const json& j, const std::string& where = "preprocess");
translation::TranslationHyper translation_hyper_from_json(const json& j,
                                                          const std::string& where = "translation");
segmentation::SegHyper seg_hyper_from_json(const json& j, const std::string& where = "segmentation");
postproc::PostprocSpec postproc_from_json(const json& j, const std::string& where = "postproc");
evaluation::EvalOptions eval_options_from_json(const json& j, const std::string& where = "eval");
Paths paths_from_json(const json& j, const std::string& where = "paths");

struct LoadedConfig {
  PipelineConfig config;
  std::vector<std::string> defaulted_sections;  // top-level sections absent from the file
};

/// Top-level sections may be omitted (defaults apply); a present section must
/// list all of its fields. Validates the result. Throws kConfig.
LoadedConfig parse_config(const json& j);
LoadedConfig load_config(const std::filesystem::path& path);

std::string input_mode_name(imaging::InputMode m);
imaging::InputMode parse_input_mode(const std::string& s);

}  // namespace sim2seg::config
