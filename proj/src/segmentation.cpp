#include "sim2seg/segmentation.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sim2seg/config.hpp"
#include "sim2seg/nn/checkpoint.hpp"
#include "sim2seg/nn/convert.hpp"

namespace sim2seg::segmentation {
namespace {

constexpr const char* kArchiveName = "model.ckpt";
constexpr const char* kSidecarName = "checkpoint.json";

nn::ParamList<float> prefixed(const nn::ParamList<float>& params, const std::string& prefix) {
  nn::ParamList<float> out;
  for (const auto& p : params) out.push_back({prefix + p.name, p.var});
  return out;
}

nlohmann::json losses_json(const SegLosses& l) {
  return {{"adv_g", l.adv_g}, {"l1", l.l1}, {"l1_weighted", l.l1_weighted},
          {"disc", l.disc},   {"total_g", l.total_g}};
}

void require_finite(double v, const char* term, std::int64_t step) {
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::kTrainingFault,
                std::string("non-finite ") + term + " at step " + std::to_string(step));
  }
}

InstanceMask resize_nearest(const InstanceMask& mask, int w, int h) {
  if (mask.width() == w && mask.height() == h) return mask;
  InstanceMask out(w, h);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(mask.height() - 1, static_cast<int>((y + 0.5) * mask.height() / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(mask.width() - 1, static_cast<int>((x + 0.5) * mask.width() / w));
      out.at(x, y) = mask.at(sx, sy);
    }
  }
  return out;
}

Tensor<float> concat_batch(const std::vector<const Tensor<float>*>& items) {
  const auto& first = *items.front();
  Tensor<float> out(static_cast<int>(items.size()), first.c(), first.h(), first.w());
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.values().segment(static_cast<Eigen::Index>(i) * first.sample_size(), first.sample_size()) =
        items[i]->values();
  }
  return out;
}

void check_batch(const Tensor<float>& input, const Tensor<float>& target, const SegHyper& h) {
  const int s = h.image_size;
  if (input.c() != h.input_channels || input.h() != s || input.w() != s) {
    throw Error(ErrorKind::kShape, "segmentation input " + nn::shape_string(input.shape()) +
                                       " does not match the model");
  }
  if (target.n() != input.n() || target.c() != 1 || target.h() != s || target.w() != s) {
    throw Error(ErrorKind::kShape, "segmentation target " + nn::shape_string(target.shape()) +
                                       " does not match the input");
  }
}

}  // namespace

std::string SegHyper::check() const {
  if (lambda_l1 < 0) return "segmentation.lambda_l1 must be >= 0";
  if (!(learning_rate > 0)) return "segmentation.learning_rate must be > 0";
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) return "segmentation.adam_beta1 must lie in [0,1)";
  if (image_size < 4) return "segmentation.image_size too small";
  const int side = 1 << unet_levels();
  if (image_size % side != 0) {
    return "segmentation.image_size must be divisible by 2^levels";
  }
  if (iterations < 0 || batch_size < 1 || ngf < 1 || ndf < 1 || checkpoint_interval < 1) {
    return "segmentation iteration/batch/width settings must be positive";
  }
  if (!(dropout >= 0 && dropout < 1)) return "segmentation.dropout must lie in [0,1)";
  if (input_channels < 1) return "segmentation input channels must be positive";
  // Patch discriminator needs at least 16 px for its three stride-2 stages.
  if (image_size < 32) return "segmentation.image_size must be >= 32 (patch discriminator)";
  return {};
}

int SegHyper::unet_levels() const {
  if (levels > 0) return levels;
  int l = 0;
  while ((1 << (l + 1)) <= image_size) ++l;
  return l;
}

Var<float> SegmentationModel::generate(const Var<float>& input, const nn::ForwardOptions& opt) const {
  return gen(input, opt);
}

Var<float> SegmentationModel::discriminate(const Var<float>& input, const Var<float>& mask) const {
  return disc(nn::concat_channels(input, mask));
}

SegmentationModel init_segmentation_model(const SegHyper& hyper, std::mt19937_64& rng) {
  if (const auto bad = hyper.check(); !bad.empty()) throw Error(ErrorKind::kConfig, bad);
  SegmentationModel m;
  m.hyper = hyper;
  m.gen = nn::UNetGenerator<float>(hyper.input_channels, 1, hyper.ngf, hyper.unet_levels(),
                                   hyper.dropout, rng);
  m.disc = nn::PatchDiscriminator<float>(hyper.input_channels + 1, hyper.ndf, 3, rng);
  return m;
}

ImageBuffer encode_mask_target(const InstanceMask& mask, TargetEncoding encoding) {
  const auto ids = mask.instance_ids();
  std::map<InstanceMask::Id, float> level;
  const int k = static_cast<int>(ids.size());
  int rank = 0;
  for (auto id : ids) {
    double v = 255.0;
    if (encoding == TargetEncoding::kInstanceLevels && k > 1) {
      v = std::floor(64.0 + 191.0 * rank / (k - 1) + 0.5);
    }
    level[id] = static_cast<float>(v);
    ++rank;
  }
  ImageBuffer out(mask.width(), mask.height(), 1, ValueDomain::kU8);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0) out.data()[static_cast<Eigen::Index>(i)] = level[mask[i]];
  }
  return out;
}

std::vector<TrainingPair> make_training_pairs(const DomainDataset& dataset,
                                              const imaging::PreprocessSpec& spec,
                                              const SegHyper& hyper) {
  const int s = hyper.image_size;
  std::vector<TrainingPair> pairs;
  pairs.reserve(dataset.items.size());
  for (const auto& item : dataset.items) {
    if (!item.mask) throw Error(ErrorKind::kData, "sample '" + item.ref + "' has no mask");
    const ImageBuffer rgb = imaging::resize_bilinear(item.image, s, s);
    const InstanceMask mask = resize_nearest(*item.mask, s, s);
    TrainingPair p;
    p.ref = item.ref;
    p.input = nn::stack_planes(imaging::preprocess_for_segmentation(rgb, spec, hyper.input_mode));
    p.target = nn::to_batch(imaging::normalize(encode_mask_target(mask, hyper.target_encoding)));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

Var<float> bce_generator_loss(const Var<float>& fake_logits) {
  return nn::bce_with_logits_to(fake_logits, 1.0f);
}

Var<float> bce_discriminator_loss(const Var<float>& real_logits, const Var<float>& fake_logits) {
  return nn::weighted_sum<float>({{0.5f, nn::bce_with_logits_to(real_logits, 1.0f)},
                                  {0.5f, nn::bce_with_logits_to(fake_logits, 0.0f)}});
}

SegLosses segmentation_losses(const Tensor<float>& input, const Tensor<float>& target,
                              const SegmentationModel& model) {
  check_batch(input, target, model.hyper);
  nn::NoGradGuard no_grad;
  const auto x = nn::constant(input);
  const auto y = nn::constant(target);
  const auto fake = model.generate(x);
  SegLosses out;
  out.adv_g = nn::item(bce_generator_loss(model.discriminate(x, fake)));
  out.l1 = nn::item(nn::l1(fake, y));
  out.l1_weighted = model.hyper.lambda_l1 * out.l1;
  out.total_g = out.adv_g + out.l1_weighted;
  out.disc = nn::item(bce_discriminator_loss(model.discriminate(x, y), model.discriminate(x, fake)));
  return out;
}

SegmentationTrainer::SegmentationTrainer(SegmentationModel model, std::uint64_t seed)
    : model_(std::move(model)),
      gen_opt_(prefixed(model_.gen.parameters(), "gen."), model_.hyper.adam_beta1),
      disc_opt_(prefixed(model_.disc.parameters(), "disc."), model_.hyper.adam_beta1),
      rng_(seed) {}

std::vector<int> SegmentationTrainer::sample_indices(int count, int population) {
  std::uniform_int_distribution<int> pick(0, population - 1);
  std::vector<int> out(count);
  for (int& i : out) i = pick(rng_);
  return out;
}

SegLosses SegmentationTrainer::step(const Tensor<float>& input, const Tensor<float>& target) {
  check_batch(input, target, model_.hyper);
  const auto& h = model_.hyper;
  const double lr = nn::linear_decay_lr(h.learning_rate, model_.step, h.iterations);
  const auto x = nn::constant(input);
  const auto y = nn::constant(target);
  nn::ForwardOptions opt{true, &rng_};
  const auto fake = model_.generate(x, opt);

  SegLosses out;
  disc_opt_.zero_grad();
  const auto d = bce_discriminator_loss(model_.discriminate(x, y),
                                        model_.discriminate(x, nn::detach(fake)));
  out.disc = nn::item(d);
  require_finite(out.disc, "discriminator loss", model_.step);
  nn::backward(d);
  disc_opt_.step(lr);

  gen_opt_.zero_grad();
  disc_opt_.zero_grad();
  const auto adv = bce_generator_loss(model_.discriminate(x, fake));
  const auto l1 = nn::l1(fake, y);
  const auto total = nn::weighted_sum<float>({{1.f, adv}, {static_cast<float>(h.lambda_l1), l1}});
  out.adv_g = nn::item(adv);
  out.l1 = nn::item(l1);
  out.l1_weighted = h.lambda_l1 * out.l1;
  out.total_g = nn::item(total);
  require_finite(out.total_g, "generator loss", model_.step);
  nn::backward(total);
  gen_opt_.step(lr);
  disc_opt_.zero_grad();

  if (!nn::all_finite(gen_opt_.params()) || !nn::all_finite(disc_opt_.params())) {
    throw Error(ErrorKind::kTrainingFault,
                "non-finite parameter after step " + std::to_string(model_.step));
  }
  ++model_.step;
  return out;
}

namespace {

nn::TensorArchive model_archive(const SegmentationModel& model, nlohmann::json& meta) {
  nn::TensorArchive ar;
  nn::put_params(ar, "gen.", model.gen.parameters());
  nn::put_params(ar, "disc.", model.disc.parameters());
  meta["kind"] = "segmentation";
  meta["hyper"] = config::to_json(model.hyper);
  meta["step"] = model.step;
  return ar;
}

SegmentationModel model_from_archive(const nn::TensorArchive& ar, nlohmann::json& meta) {
  meta = nlohmann::json::parse(ar.meta_json);
  if (meta.value("kind", "") != "segmentation") {
    throw Error(ErrorKind::kData, "checkpoint is not a segmentation model");
  }
  std::mt19937_64 rng(0);
  SegmentationModel m = init_segmentation_model(config::seg_hyper_from_json(meta.at("hyper")), rng);
  nn::get_params(ar, "gen.", m.gen.parameters());
  nn::get_params(ar, "disc.", m.disc.parameters());
  m.step = meta.at("step").get<std::int64_t>();
  return m;
}

void write_sidecar(const std::filesystem::path& dir, const SegmentationModel& model,
                   const nlohmann::json& losses) {
  nlohmann::json side = {{"kind", "segmentation"},
                         {"step", model.step},
                         {"hyper", config::to_json(model.hyper)},
                         {"losses", losses}};
  std::ofstream(dir / kSidecarName) << side.dump(2) << "\n";
}

}  // namespace

void SegmentationTrainer::save(const std::filesystem::path& dir, const SegLosses& snapshot) const {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  auto ar = model_archive(model_, meta);
  nn::put_adam(ar, "opt_g.", gen_opt_);
  nn::put_adam(ar, "opt_d.", disc_opt_);
  meta["rng"] = nn::rng_state(rng_);
  ar.meta_json = meta.dump();
  ar.save(dir / kArchiveName);
  write_sidecar(dir, model_, losses_json(snapshot));
}

SegmentationTrainer SegmentationTrainer::load(const std::filesystem::path& dir) {
  const auto ar = nn::TensorArchive::load(dir / kArchiveName);
  nlohmann::json meta;
  SegmentationTrainer t(model_from_archive(ar, meta), 0);
  if (meta.contains("rng")) {
    nn::get_adam(ar, "opt_g.", t.gen_opt_);
    nn::get_adam(ar, "opt_d.", t.disc_opt_);
    nn::set_rng_state(t.rng_, meta.at("rng").get<std::string>());
  }
  return t;
}

void save_segmentation_model(const SegmentationModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  auto ar = model_archive(model, meta);
  ar.meta_json = meta.dump();
  ar.save(dir / kArchiveName);
  write_sidecar(dir, model, nlohmann::json::object());
}

SegmentationModel load_segmentation_model(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / kArchiveName)) {
    throw Error(ErrorKind::kMissingArtifact,
                "segmentation checkpoint not found at " + (dir / kArchiveName).string());
  }
  nlohmann::json meta;
  return model_from_archive(nn::TensorArchive::load(dir / kArchiveName), meta);
}

SegmentationModel train_segmentation(const std::vector<TrainingPair>& pairs, const SegHyper& hyper,
                                     const std::filesystem::path& checkpoint_dir,
                                     std::uint64_t seed, const LossCallback& on_step) {
  if (pairs.empty()) throw Error(ErrorKind::kData, "segmentation training needs at least one pair");
  if (const auto bad = hyper.check(); !bad.empty()) throw Error(ErrorKind::kConfig, bad);

  std::optional<SegmentationTrainer> trainer;
  if (!checkpoint_dir.empty() && std::filesystem::exists(checkpoint_dir / kArchiveName)) {
    trainer.emplace(SegmentationTrainer::load(checkpoint_dir));
    trainer->model().hyper.iterations = hyper.iterations;
  } else {
    std::mt19937_64 init_rng(seed);
    trainer.emplace(init_segmentation_model(hyper, init_rng), seed ^ 0x9e3779b97f4a7c15ull);
  }
  std::ofstream log;
  if (!checkpoint_dir.empty()) {
    std::filesystem::create_directories(checkpoint_dir);
    log.open(checkpoint_dir / "losses.jsonl", std::ios::app);
  }
  SegLosses last;
  while (trainer->model().step < hyper.iterations) {
    std::vector<const Tensor<float>*> xs, ys;
    for (int i : trainer->sample_indices(hyper.batch_size, static_cast<int>(pairs.size()))) {
      xs.push_back(&pairs[i].input);
      ys.push_back(&pairs[i].target);
    }
    const std::int64_t step = trainer->model().step;
    last = trainer->step(concat_batch(xs), concat_batch(ys));
    if (log) log << nlohmann::json({{"step", step}, {"losses", losses_json(last)}}).dump() << "\n";
    if (on_step) on_step(step, last);
    const std::int64_t done = trainer->model().step;
    if (!checkpoint_dir.empty() &&
        (done % hyper.checkpoint_interval == 0 || done == hyper.iterations)) {
      trainer->save(checkpoint_dir, last);
    }
  }
  return trainer->model();
}

ImageBuffer predict_mask(const Tensor<float>& input, const SegmentationModel& model) {
  const int s = model.hyper.image_size;
  if (input.n() != 1 || input.c() != model.hyper.input_channels || input.h() != s || input.w() != s) {
    throw Error(ErrorKind::kShape, "predict_mask input " + nn::shape_string(input.shape()) +
                                       " does not match the model");
  }
  nn::NoGradGuard no_grad;
  const auto out = model.generate(nn::constant(input));
  return imaging::denormalize(nn::to_image(out->value));
}

ImageBuffer predict_mask(const ImageBuffer& input, const SegmentationModel& model) {
  if (input.channels() != 1) {
    throw Error(ErrorKind::kShape, "predict_mask expects a single-channel image");
  }
  if (input.domain() != ValueDomain::kNorm) throw Error(ErrorKind::kDomain, "predict_mask expects NORM");
  return predict_mask(nn::to_batch(input), model);
}

}  // namespace sim2seg::segmentation
