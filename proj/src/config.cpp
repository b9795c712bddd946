#include "sim2seg/config.hpp"

#include <fstream>
#include <set>

namespace sim2seg::config {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::kConfig, msg); }

/// Strict field reader over one JSON object.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("'" + where_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) fail("missing field '" + field(key) + "'");
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail("field '" + field(key) + "' has the wrong type");
    }
  }

  void get(const char* key, Eigen::Vector3d& out) { get_vec(key, out); }
  void get(const char* key, Eigen::Vector2d& out) { get_vec(key, out); }

  const json& sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) fail("missing field '" + field(key) + "'");
    return *it;
  }

  std::string field(const std::string& key) const { return where_ + "." + key; }

  /// Call after all fields were read.
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail("unknown key '" + field(k) + "'");
    }
  }

 private:
  template <typename V>
  void get_vec(const char* key, V& out) {
    std::vector<double> v;
    get(key, v);
    if (static_cast<Eigen::Index>(v.size()) != out.size()) {
      fail("field '" + field(key) + "' must have " + std::to_string(out.size()) + " entries");
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = v[static_cast<std::size_t>(i)];
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& value, const std::vector<std::pair<const char*, E>>& table,
             const std::string& field) {
  for (const auto& [name, e] : table)
    if (value == name) return e;
  std::string allowed;
  for (const auto& [name, e] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  fail("field '" + field + "' must be one of: " + allowed);
}

template <typename E>
std::string enum_name(E value, const std::vector<std::pair<const char*, E>>& table) {
  for (const auto& [name, e] : table)
    if (e == value) return name;
  return "?";
}

const std::vector<std::pair<const char*, imaging::InputMode>> kInputModes = {
    {"sobel", imaging::InputMode::kSobel},
    {"gray", imaging::InputMode::kGray},
    {"gray+sobel", imaging::InputMode::kGraySobel}};
const std::vector<std::pair<const char*, imaging::SobelMagnitude>> kMagnitudes = {
    {"euclidean", imaging::SobelMagnitude::kEuclidean},
    {"abs_sum", imaging::SobelMagnitude::kAbsSum}};
const std::vector<std::pair<const char*, translation::AdvMode>> kTranslationAdv = {
    {"least_squares", translation::AdvMode::kLeastSquares}};
const std::vector<std::pair<const char*, translation::GeneratorKind>> kGenerators = {
    {"resnet", translation::GeneratorKind::kResnet},
    {"identity", translation::GeneratorKind::kIdentity}};
const std::vector<std::pair<const char*, segmentation::AdvMode>> kSegAdv = {
    {"binary_cross_entropy", segmentation::AdvMode::kBinaryCrossEntropy}};
const std::vector<std::pair<const char*, segmentation::TargetEncoding>> kEncodings = {
    {"instance_levels", segmentation::TargetEncoding::kInstanceLevels},
    {"binary", segmentation::TargetEncoding::kBinary}};
const std::vector<std::pair<const char*, postproc::Mode>> kPostprocModes = {
    {"watershed", postproc::Mode::kWatershed},
    {"connected_components", postproc::Mode::kConnectedComponents}};

json vec(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
json vec(const Eigen::Vector2d& v) { return {v.x(), v.y()}; }

void require_valid(const std::string& problem) {
  if (!problem.empty()) fail(problem);
}

}  // namespace

std::string input_mode_name(imaging::InputMode m) { return enum_name(m, kInputModes); }
imaging::InputMode parse_input_mode(const std::string& s) {
  return parse_enum(s, kInputModes, "input_mode");
}

json to_json(const synthgen::SceneConfig& c) {
  const auto& l = c.light;
  return {{"tray_center", vec(c.tray_center)},
          {"tray_inner_size", vec(c.tray_inner_size)},
          {"spawn_box", vec(c.spawn_box)},
          {"spawn_offset_z", c.spawn_offset_z},
          {"camera_height", c.camera_height},
          {"camera_fov", c.camera_fov},
          {"n_objects_choices", c.n_objects_choices},
          {"asset_pool", c.asset_pool},
          {"light",
           {{"azimuth_min", l.azimuth_min}, {"azimuth_max", l.azimuth_max},
            {"elevation_min", l.elevation_min}, {"elevation_max", l.elevation_max},
            {"intensity_min", l.intensity_min}, {"intensity_max", l.intensity_max}}},
          {"image_size", c.image_size},
          {"noise",
           {{"label", c.noise.label}, {"gaussian_sigma", c.noise.gaussian_sigma},
            {"salt_pepper_prob", c.noise.salt_pepper_prob}}},
          {"seed", c.seed}};
}

synthgen::SceneConfig scene_config_from_json(const json& j, const std::string& where) {
  synthgen::SceneConfig c;
  Reader r(j, where);
  r.get("tray_center", c.tray_center);
  r.get("tray_inner_size", c.tray_inner_size);
  r.get("spawn_box", c.spawn_box);
  r.get("spawn_offset_z", c.spawn_offset_z);
  r.get("camera_height", c.camera_height);
  r.get("camera_fov", c.camera_fov);
  r.get("n_objects_choices", c.n_objects_choices);
  r.get("asset_pool", c.asset_pool);
  {
    Reader lr(r.sub("light"), r.field("light"));
    lr.get("azimuth_min", c.light.azimuth_min);
    lr.get("azimuth_max", c.light.azimuth_max);
    lr.get("elevation_min", c.light.elevation_min);
    lr.get("elevation_max", c.light.elevation_max);
    lr.get("intensity_min", c.light.intensity_min);
    lr.get("intensity_max", c.light.intensity_max);
    lr.finish();
  }
  r.get("image_size", c.image_size);
  {
    Reader nr(r.sub("noise"), r.field("noise"));
    nr.get("label", c.noise.label);
    nr.get("gaussian_sigma", c.noise.gaussian_sigma);
    nr.get("salt_pepper_prob", c.noise.salt_pepper_prob);
    nr.finish();
  }
  r.get("seed", c.seed);
  r.finish();
  return c;
}

json to_json(const imaging::PreprocessSpec& p) {
  return {{"grayscale", p.grayscale},
          {"sobel", p.sobel},
          {"sobel_magnitude", enum_name(p.magnitude, kMagnitudes)},
          {"border", "replicate"}};
}

imaging::PreprocessSpec preprocess_from_json(const json& j, const std::string& where) {
  imaging::PreprocessSpec p;
  Reader r(j, where);
  std::string magnitude, border;
  r.get("grayscale", p.grayscale);
  r.get("sobel", p.sobel);
  r.get("sobel_magnitude", magnitude);
  r.get("border", border);
  r.finish();
  p.magnitude = parse_enum(magnitude, kMagnitudes, r.field("sobel_magnitude"));
  if (border != "replicate") fail("field '" + r.field("border") + "' must be replicate");
  return p;
}

json to_json(const translation::TranslationHyper& h) {
  return {{"lambda_cycle", h.lambda_cycle},
          {"lambda_identity", h.lambda_identity},
          {"adv_mode", enum_name(h.adv_mode, kTranslationAdv)},
          {"learning_rate", h.learning_rate},
          {"adam_beta1", h.adam_beta1},
          {"replay_buffer", h.replay_buffer},
          {"image_size", h.image_size},
          {"iterations", h.iterations},
          {"batch_size", h.batch_size},
          {"ngf", h.ngf},
          {"ndf", h.ndf},
          {"residual_blocks", h.residual_blocks},
          {"checkpoint_interval", h.checkpoint_interval},
          {"generator", enum_name(h.generator, kGenerators)}};
}

translation::TranslationHyper translation_hyper_from_json(const json& j, const std::string& where) {
  translation::TranslationHyper h;
  Reader r(j, where);
  std::string adv, gen;
  r.get("lambda_cycle", h.lambda_cycle);
  r.get("lambda_identity", h.lambda_identity);
  r.get("adv_mode", adv);
  r.get("learning_rate", h.learning_rate);
  r.get("adam_beta1", h.adam_beta1);
  r.get("replay_buffer", h.replay_buffer);
  r.get("image_size", h.image_size);
  r.get("iterations", h.iterations);
  r.get("batch_size", h.batch_size);
  r.get("ngf", h.ngf);
  r.get("ndf", h.ndf);
  r.get("residual_blocks", h.residual_blocks);
  r.get("checkpoint_interval", h.checkpoint_interval);
  r.get("generator", gen);
  r.finish();
  h.adv_mode = parse_enum(adv, kTranslationAdv, r.field("adv_mode"));
  h.generator = parse_enum(gen, kGenerators, r.field("generator"));
  return h;
}

json to_json(const segmentation::SegHyper& h) {
  return {{"lambda_l1", h.lambda_l1},
          {"adv_mode", enum_name(h.adv_mode, kSegAdv)},
          {"learning_rate", h.learning_rate},
          {"adam_beta1", h.adam_beta1},
          {"input_mode", enum_name(h.input_mode, kInputModes)},
          {"target_encoding", enum_name(h.target_encoding, kEncodings)},
          {"image_size", h.image_size},
          {"iterations", h.iterations},
          {"batch_size", h.batch_size},
          {"ngf", h.ngf},
          {"ndf", h.ndf},
          {"levels", h.levels},
          {"dropout", h.dropout},
          {"checkpoint_interval", h.checkpoint_interval},
          {"input_channels", h.input_channels}};
}

segmentation::SegHyper seg_hyper_from_json(const json& j, const std::string& where) {
  segmentation::SegHyper h;
  Reader r(j, where);
  std::string adv, mode, enc;
  r.get("lambda_l1", h.lambda_l1);
  r.get("adv_mode", adv);
  r.get("learning_rate", h.learning_rate);
  r.get("adam_beta1", h.adam_beta1);
  r.get("input_mode", mode);
  r.get("target_encoding", enc);
  r.get("image_size", h.image_size);
  r.get("iterations", h.iterations);
  r.get("batch_size", h.batch_size);
  r.get("ngf", h.ngf);
  r.get("ndf", h.ndf);
  r.get("levels", h.levels);
  r.get("dropout", h.dropout);
  r.get("checkpoint_interval", h.checkpoint_interval);
  r.get("input_channels", h.input_channels);
  r.finish();
  h.adv_mode = parse_enum(adv, kSegAdv, r.field("adv_mode"));
  h.input_mode = parse_enum(mode, kInputModes, r.field("input_mode"));
  h.target_encoding = parse_enum(enc, kEncodings, r.field("target_encoding"));
  return h;
}

json to_json(const postproc::PostprocSpec& p) {
  return {{"binarize_threshold", p.binarize_threshold},
          {"marker_min_distance", p.marker_min_distance},
          {"min_instance_area", p.min_instance_area},
          {"mode", enum_name(p.mode, kPostprocModes)}};
}

postproc::PostprocSpec postproc_from_json(const json& j, const std::string& where) {
  postproc::PostprocSpec p;
  Reader r(j, where);
  std::string mode;
  r.get("binarize_threshold", p.binarize_threshold);
  r.get("marker_min_distance", p.marker_min_distance);
  r.get("min_instance_area", p.min_instance_area);
  r.get("mode", mode);
  r.finish();
  p.mode = parse_enum(mode, kPostprocModes, r.field("mode"));
  return p;
}

json to_json(const evaluation::EvalOptions& e) {
  return {{"count_unmatched_pred", e.count_unmatched_pred}};
}

evaluation::EvalOptions eval_options_from_json(const json& j, const std::string& where) {
  evaluation::EvalOptions e;
  Reader r(j, where);
  r.get("count_unmatched_pred", e.count_unmatched_pred);
  r.finish();
  return e;
}

json to_json(const Paths& p) {
  return {{"synth_dataset", p.synth_dataset},
          {"real_images", p.real_images},
          {"checkpoints", p.checkpoints},
          {"reports", p.reports}};
}

Paths paths_from_json(const json& j, const std::string& where) {
  Paths p;
  Reader r(j, where);
  r.get("synth_dataset", p.synth_dataset);
  r.get("real_images", p.real_images);
  r.get("checkpoints", p.checkpoints);
  r.get("reports", p.reports);
  r.finish();
  return p;
}

json to_json(const PipelineConfig& c) {
  return {{"scene", to_json(c.scene)},
          {"preprocess", to_json(c.preprocess)},
          {"translation", to_json(c.translation)},
          {"segmentation", to_json(c.segmentation)},
          {"postproc", to_json(c.postproc)},
          {"eval", to_json(c.eval)},
          {"paths", to_json(c.paths)},
          {"seed", c.seed},
          {"workers", c.workers}};
}

std::string PipelineConfig::check() const {
  if (auto bad = scene.check(); !bad.empty()) return bad;
  if (auto bad = preprocess.check(segmentation.input_mode); !bad.empty()) return bad;
  if (auto bad = translation.check(); !bad.empty()) return bad;
  if (auto bad = segmentation.check(); !bad.empty()) return bad;
  if (auto bad = postproc.check(); !bad.empty()) return bad;
  if (segmentation.input_channels != preprocess.input_channels(segmentation.input_mode)) {
    return "segmentation.input_channels must be " +
           std::to_string(preprocess.input_channels(segmentation.input_mode)) +
           " for the chosen preprocess and input_mode";
  }
  if (workers < 0) return "workers must be >= 0";
  const std::vector<std::pair<const char*, const std::string*>> paths_list = {
      {"paths.synth_dataset", &paths.synth_dataset},
      {"paths.real_images", &paths.real_images},
      {"paths.checkpoints", &paths.checkpoints},
      {"paths.reports", &paths.reports}};
  for (std::size_t a = 0; a < paths_list.size(); ++a) {
    if (paths_list[a].second->empty()) return std::string(paths_list[a].first) + " must not be empty";
    for (std::size_t b = a + 1; b < paths_list.size(); ++b) {
      if (std::filesystem::path(*paths_list[a].second).lexically_normal() ==
          std::filesystem::path(*paths_list[b].second).lexically_normal()) {
        return std::string(paths_list[a].first) + " and " + paths_list[b].first + " must differ";
      }
    }
  }
  return {};
}

LoadedConfig parse_config(const json& j) {
  if (!j.is_object()) fail("config must be a JSON object");
  LoadedConfig out;
  auto& c = out.config;
  const std::set<std::string> known = {"scene", "preprocess", "translation", "segmentation",
                                       "postproc", "eval", "paths", "seed", "workers"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) fail("unknown key '" + k + "'");

  auto section = [&](const char* key, auto parse) {
    const auto it = j.find(key);
    if (it == j.end()) {
      out.defaulted_sections.push_back(key);
    } else {
      parse(*it);
    }
  };
  section("scene", [&](const json& s) { c.scene = scene_config_from_json(s); });
  section("preprocess", [&](const json& s) { c.preprocess = preprocess_from_json(s); });
  section("translation", [&](const json& s) { c.translation = translation_hyper_from_json(s); });
  section("segmentation", [&](const json& s) { c.segmentation = seg_hyper_from_json(s); });
  section("postproc", [&](const json& s) { c.postproc = postproc_from_json(s); });
  section("eval", [&](const json& s) { c.eval = eval_options_from_json(s); });
  section("paths", [&](const json& s) { c.paths = paths_from_json(s); });
  section("seed", [&](const json& s) {
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      fail("field 'seed' must be a non-negative integer");
    }
    c.seed = s.get<std::uint64_t>();
  });
  section("workers", [&](const json& s) {
    if (!s.is_number_integer()) fail("field 'workers' must be an integer");
    c.workers = s.get<int>();
  });
  require_valid(c.check());
  return out;
}

LoadedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace sim2seg::config
