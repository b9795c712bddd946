#include "sim2seg/translation.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sim2seg/config.hpp"
#include "sim2seg/imaging.hpp"
#include "sim2seg/nn/checkpoint.hpp"
#include "sim2seg/nn/convert.hpp"

namespace sim2seg::translation {
namespace {

constexpr const char* kArchiveName = "model.ckpt";
constexpr const char* kSidecarName = "checkpoint.json";

nn::ParamList<float> prefixed(const nn::ParamList<float>& params, const std::string& prefix) {
  nn::ParamList<float> out;
  for (const auto& p : params) out.push_back({prefix + p.name, p.var});
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

void require_finite(double v, const char* term, std::int64_t step) {
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::kTrainingFault,
                std::string("non-finite ") + term + " at step " + std::to_string(step));
  }
}

nlohmann::json losses_json(const TranslationLosses& l) {
  return {{"adv_g_a2b", l.adv_g_a2b}, {"adv_g_b2a", l.adv_g_b2a}, {"cyc_a", l.cyc_a},
          {"cyc_b", l.cyc_b},         {"idt", l.idt},             {"disc_a", l.disc_a},
          {"disc_b", l.disc_b},       {"total_g", l.total_g}};
}

std::vector<Tensor<float>> prepare(const DomainDataset& ds, int size) {
  std::vector<Tensor<float>> out;
  out.reserve(ds.items.size());
  for (const auto& item : ds.items) {
    ImageBuffer img = item.image;
    if (img.domain() == ValueDomain::kU8) {
      img = imaging::normalize(imaging::resize_bilinear(img, size, size));
    } else if (img.width() != size || img.height() != size) {
      throw Error(ErrorKind::kShape, "NORM training image '" + item.ref + "' is not at model size");
    }
    if (img.channels() != 3) throw Error(ErrorKind::kShape, "translation expects RGB images");
    out.push_back(nn::to_batch(img));
  }
  return out;
}

}  // namespace

std::string TranslationHyper::check() const {
  if (lambda_cycle < 0 || lambda_identity < 0) return "translation loss weights must be >= 0";
  if (!(learning_rate > 0)) return "translation.learning_rate must be > 0";
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) return "translation.adam_beta1 must lie in [0,1)";
  if (replay_buffer < 0) return "translation.replay_buffer must be >= 0";
  if (image_size < 32 || image_size % 4 != 0) {
    return "translation.image_size must be a multiple of 4 and >= 32";
  }
  if (iterations < 0 || batch_size < 1 || ngf < 1 || ndf < 1 || checkpoint_interval < 1) {
    return "translation iteration/batch/width settings must be positive";
  }
  return {};
}

Var<float> TranslationModel::a2b(const Var<float>& x) const {
  return hyper.generator == GeneratorKind::kIdentity ? x : gen_a2b(x);
}

Var<float> TranslationModel::b2a(const Var<float>& x) const {
  return hyper.generator == GeneratorKind::kIdentity ? x : gen_b2a(x);
}

nn::ParamList<float> TranslationModel::generator_parameters() const {
  if (hyper.generator == GeneratorKind::kIdentity) return {};
  auto out = prefixed(gen_a2b.parameters(), "gen_a2b.");
  for (auto& p : prefixed(gen_b2a.parameters(), "gen_b2a.")) out.push_back(p);
  return out;
}

nn::ParamList<float> TranslationModel::discriminator_parameters() const {
  auto out = prefixed(disc_a.parameters(), "disc_a.");
  for (auto& p : prefixed(disc_b.parameters(), "disc_b.")) out.push_back(p);
  return out;
}

TranslationModel init_translation_model(const TranslationHyper& hyper, std::mt19937_64& rng) {
  if (const auto bad = hyper.check(); !bad.empty()) throw Error(ErrorKind::kConfig, bad);
  TranslationModel m;
  m.hyper = hyper;
  if (hyper.generator == GeneratorKind::kResnet) {
    m.gen_a2b = nn::ResnetGenerator<float>(3, 3, hyper.ngf, hyper.blocks(), rng);
    m.gen_b2a = nn::ResnetGenerator<float>(3, 3, hyper.ngf, hyper.blocks(), rng);
  }
  m.disc_a = nn::PatchDiscriminator<float>(3, hyper.ndf, 3, rng);
  m.disc_b = nn::PatchDiscriminator<float>(3, hyper.ndf, 3, rng);
  return m;
}

Var<float> lsgan_generator_loss(const Var<float>& fake_scores) {
  return nn::mse_to(fake_scores, 1.0f);
}

Var<float> lsgan_discriminator_loss(const Var<float>& real_scores, const Var<float>& fake_scores) {
  return nn::weighted_sum<float>({{0.5f, nn::mse_to(real_scores, 1.0f)},
                                  {0.5f, nn::mse_to(fake_scores, 0.0f)}});
}

Var<float> cycle_loss(const Var<float>& reconstructed, const Var<float>& original) {
  return nn::l1(reconstructed, original);
}

namespace {

struct GeneratorGraph {
  Var<float> fake_a, fake_b;
  Var<float> adv_a2b, adv_b2a, cyc_a, cyc_b, idt, total;
};

GeneratorGraph generator_graph(const TranslationModel& m, const Var<float>& real_a,
                               const Var<float>& real_b) {
  GeneratorGraph g;
  g.fake_b = m.a2b(real_a);
  const auto rec_a = m.b2a(g.fake_b);
  g.fake_a = m.b2a(real_b);
  const auto rec_b = m.a2b(g.fake_a);
  g.adv_a2b = lsgan_generator_loss(m.disc_b(g.fake_b));
  g.adv_b2a = lsgan_generator_loss(m.disc_a(g.fake_a));
  g.cyc_a = cycle_loss(rec_a, real_a);
  g.cyc_b = cycle_loss(rec_b, real_b);
  const auto lc = static_cast<float>(m.hyper.lambda_cycle);
  const auto li = static_cast<float>(m.hyper.lambda_identity);
  if (li > 0) {
    g.idt = nn::weighted_sum<float>({{1.f, nn::l1(m.b2a(real_a), real_a)},
                                     {1.f, nn::l1(m.a2b(real_b), real_b)}});
  } else {
    g.idt = nn::constant(Tensor<float>(1, 1, 1, 1));
  }
  g.total = nn::weighted_sum<float>(
      {{1.f, g.adv_a2b}, {1.f, g.adv_b2a}, {lc, g.cyc_a}, {lc, g.cyc_b}, {li, g.idt}});
  return g;
}

void check_batches(const Tensor<float>& a, const Tensor<float>& b, int size) {
  if (!a.same_shape(b)) throw Error(ErrorKind::kShape, "translation batches differ in shape");
  if (a.c() != 3 || a.h() != size || a.w() != size) {
    throw Error(ErrorKind::kShape, "translation batch " + nn::shape_string(a.shape()) +
                                       " does not match model size " + std::to_string(size));
  }
}

}  // namespace

TranslationLosses translation_losses(const Tensor<float>& batch_a, const Tensor<float>& batch_b,
                                     const TranslationModel& model) {
  check_batches(batch_a, batch_b, model.hyper.image_size);
  nn::NoGradGuard no_grad;
  const auto real_a = nn::constant(batch_a);
  const auto real_b = nn::constant(batch_b);
  const auto g = generator_graph(model, real_a, real_b);
  TranslationLosses out;
  out.adv_g_a2b = nn::item(g.adv_a2b);
  out.adv_g_b2a = nn::item(g.adv_b2a);
  out.cyc_a = nn::item(g.cyc_a);
  out.cyc_b = nn::item(g.cyc_b);
  out.idt = nn::item(g.idt);
  out.total_g = nn::item(g.total);
  out.disc_a = nn::item(lsgan_discriminator_loss(model.disc_a(real_a), model.disc_a(g.fake_a)));
  out.disc_b = nn::item(lsgan_discriminator_loss(model.disc_b(real_b), model.disc_b(g.fake_b)));
  return out;
}

Tensor<float> ReplayBuffer::query(const Tensor<float>& fakes, std::mt19937_64& rng) {
  if (capacity_ == 0) return fakes;
  Tensor<float> out(fakes.shape());
  const auto ss = fakes.sample_size();
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int n = 0; n < fakes.n(); ++n) {
    Tensor<float> img({1, fakes.c(), fakes.h(), fakes.w()}, fakes.values().segment(n * ss, ss));
    if (size() < capacity_) {
      images_.push_back(img);
      out.values().segment(n * ss, ss) = img.values();
    } else if (coin(rng) < 0.5) {
      std::uniform_int_distribution<int> pick(0, capacity_ - 1);
      const int i = pick(rng);
      out.values().segment(n * ss, ss) = images_[i].values();
      images_[i] = std::move(img);
    } else {
      out.values().segment(n * ss, ss) = img.values();
    }
  }
  return out;
}

TranslationTrainer::TranslationTrainer(TranslationModel model, std::uint64_t seed)
    : model_(std::move(model)),
      gen_opt_(model_.generator_parameters(), model_.hyper.adam_beta1),
      disc_opt_(model_.discriminator_parameters(), model_.hyper.adam_beta1),
      pool_a_(model_.hyper.replay_buffer),
      pool_b_(model_.hyper.replay_buffer),
      rng_(seed) {}

std::vector<int> TranslationTrainer::sample_indices(int count, int population) {
  std::uniform_int_distribution<int> pick(0, population - 1);
  std::vector<int> out(count);
  for (int& i : out) i = pick(rng_);
  return out;
}

TranslationLosses TranslationTrainer::step(const Tensor<float>& batch_a,
                                           const Tensor<float>& batch_b) {
  check_batches(batch_a, batch_b, model_.hyper.image_size);
  const double lr = nn::linear_decay_lr(model_.hyper.learning_rate, model_.step,
                                        model_.hyper.iterations);
  const auto real_a = nn::constant(batch_a);
  const auto real_b = nn::constant(batch_b);

  TranslationLosses out;
  gen_opt_.zero_grad();
  disc_opt_.zero_grad();
  const auto g = generator_graph(model_, real_a, real_b);
  out.adv_g_a2b = nn::item(g.adv_a2b);
  out.adv_g_b2a = nn::item(g.adv_b2a);
  out.cyc_a = nn::item(g.cyc_a);
  out.cyc_b = nn::item(g.cyc_b);
  out.idt = nn::item(g.idt);
  out.total_g = nn::item(g.total);
  require_finite(out.total_g, "generator loss", model_.step);
  nn::backward(g.total);
  gen_opt_.step(lr);

  disc_opt_.zero_grad();
  const auto pooled_a = nn::constant(pool_a_.query(g.fake_a->value, rng_));
  const auto pooled_b = nn::constant(pool_b_.query(g.fake_b->value, rng_));
  const auto d_a = lsgan_discriminator_loss(model_.disc_a(real_a), model_.disc_a(pooled_a));
  const auto d_b = lsgan_discriminator_loss(model_.disc_b(real_b), model_.disc_b(pooled_b));
  out.disc_a = nn::item(d_a);
  out.disc_b = nn::item(d_b);
  require_finite(out.disc_a + out.disc_b, "discriminator loss", model_.step);
  nn::backward(nn::weighted_sum<float>({{1.f, d_a}, {1.f, d_b}}));
  disc_opt_.step(lr);

  if (!nn::all_finite(gen_opt_.params()) || !nn::all_finite(disc_opt_.params())) {
    throw Error(ErrorKind::kTrainingFault,
                "non-finite parameter after step " + std::to_string(model_.step));
  }
  ++model_.step;
  return out;
}

namespace {

nn::TensorArchive model_archive(const TranslationModel& model, nlohmann::json& meta) {
  nn::TensorArchive ar;
  nn::put_params(ar, "", model.generator_parameters());
  nn::put_params(ar, "", model.discriminator_parameters());
  meta["kind"] = "translation";
  meta["hyper"] = config::to_json(model.hyper);
  meta["step"] = model.step;
  return ar;
}

TranslationModel model_from_archive(const nn::TensorArchive& ar, nlohmann::json& meta) {
  meta = nlohmann::json::parse(ar.meta_json);
  if (meta.value("kind", "") != "translation") {
    throw Error(ErrorKind::kData, "checkpoint is not a translation model");
  }
  const auto hyper = config::translation_hyper_from_json(meta.at("hyper"));
  std::mt19937_64 rng(0);
  TranslationModel m = init_translation_model(hyper, rng);
  nn::get_params(ar, "", m.generator_parameters());
  nn::get_params(ar, "", m.discriminator_parameters());
  m.step = meta.at("step").get<std::int64_t>();
  return m;
}

void write_sidecar(const std::filesystem::path& dir, const TranslationModel& model,
                   const nlohmann::json& losses) {
  nlohmann::json side = {{"kind", "translation"},
                         {"step", model.step},
                         {"hyper", config::to_json(model.hyper)},
                         {"losses", losses}};
  std::ofstream(dir / kSidecarName) << side.dump(2) << "\n";
}

}  // namespace

void TranslationTrainer::save(const std::filesystem::path& dir,
                              const TranslationLosses& snapshot) const {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  auto ar = model_archive(model_, meta);
  nn::put_adam(ar, "opt_g.", gen_opt_);
  nn::put_adam(ar, "opt_d.", disc_opt_);
  for (int i = 0; i < pool_a_.size(); ++i) ar.tensors["pool_a." + std::to_string(i)] = pool_a_.images()[i];
  for (int i = 0; i < pool_b_.size(); ++i) ar.tensors["pool_b." + std::to_string(i)] = pool_b_.images()[i];
  meta["pool_a"] = pool_a_.size();
  meta["pool_b"] = pool_b_.size();
  meta["rng"] = nn::rng_state(rng_);
  ar.meta_json = meta.dump();
  ar.save(dir / kArchiveName);
  write_sidecar(dir, model_, losses_json(snapshot));
}

TranslationTrainer TranslationTrainer::load(const std::filesystem::path& dir) {
  const auto ar = nn::TensorArchive::load(dir / kArchiveName);
  nlohmann::json meta;
  TranslationTrainer t(model_from_archive(ar, meta), 0);
  if (meta.contains("rng")) {
    nn::get_adam(ar, "opt_g.", t.gen_opt_);
    nn::get_adam(ar, "opt_d.", t.disc_opt_);
    for (int i = 0; i < meta.at("pool_a").get<int>(); ++i) {
      t.pool_a_.images().push_back(ar.get("pool_a." + std::to_string(i)));
    }
    for (int i = 0; i < meta.at("pool_b").get<int>(); ++i) {
      t.pool_b_.images().push_back(ar.get("pool_b." + std::to_string(i)));
    }
    nn::set_rng_state(t.rng_, meta.at("rng").get<std::string>());
  }
  return t;
}

void save_translation_model(const TranslationModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  auto ar = model_archive(model, meta);
  ar.meta_json = meta.dump();
  ar.save(dir / kArchiveName);
  write_sidecar(dir, model, nlohmann::json::object());
}

TranslationModel load_translation_model(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / kArchiveName)) {
    throw Error(ErrorKind::kMissingArtifact,
                "translation checkpoint not found at " + (dir / kArchiveName).string());
  }
  nlohmann::json meta;
  return model_from_archive(nn::TensorArchive::load(dir / kArchiveName), meta);
}

TranslationModel train_translation(const DomainDataset& synth, const DomainDataset& real,
                                   const TranslationHyper& hyper,
                                   const std::filesystem::path& checkpoint_dir, std::uint64_t seed,
                                   const LossCallback& on_step) {
  if (synth.items.empty() || real.items.empty()) {
    throw Error(ErrorKind::kData, "translation training needs non-empty synthetic and real datasets");
  }
  if (const auto bad = hyper.check(); !bad.empty()) throw Error(ErrorKind::kConfig, bad);
  const auto data_a = prepare(synth, hyper.image_size);
  const auto data_b = prepare(real, hyper.image_size);

  std::optional<TranslationTrainer> trainer;
  if (!checkpoint_dir.empty() && std::filesystem::exists(checkpoint_dir / kArchiveName)) {
    trainer.emplace(TranslationTrainer::load(checkpoint_dir));
    trainer->model().hyper.iterations = hyper.iterations;
  } else {
    std::mt19937_64 init_rng(seed);
    trainer.emplace(init_translation_model(hyper, init_rng), seed ^ 0x9e3779b97f4a7c15ull);
  }

  std::ofstream log;
  if (!checkpoint_dir.empty()) {
    std::filesystem::create_directories(checkpoint_dir);
    log.open(checkpoint_dir / "losses.jsonl", std::ios::app);
  }
  TranslationLosses last;
  while (trainer->model().step < hyper.iterations) {
    std::vector<const Tensor<float>*> a, b;
    for (int i : trainer->sample_indices(hyper.batch_size, static_cast<int>(data_a.size()))) a.push_back(&data_a[i]);
    for (int i : trainer->sample_indices(hyper.batch_size, static_cast<int>(data_b.size()))) b.push_back(&data_b[i]);
    const std::int64_t step = trainer->model().step;
    last = trainer->step(concat_batch(a), concat_batch(b));
    LossRecord rec{step, nn::linear_decay_lr(hyper.learning_rate, step, hyper.iterations), last};
    if (log) log << nlohmann::json({{"step", rec.step}, {"lr", rec.learning_rate}, {"losses", losses_json(last)}}).dump() << "\n";
    if (on_step) on_step(rec);
    const std::int64_t done = trainer->model().step;
    if (!checkpoint_dir.empty() &&
        (done % hyper.checkpoint_interval == 0 || done == hyper.iterations)) {
      trainer->save(checkpoint_dir, last);
    }
  }
  return trainer->model();
}

ImageBuffer translate_to_sim(const ImageBuffer& image, const TranslationModel& model) {
  const int s = model.hyper.image_size;
  if (image.width() != s || image.height() != s || image.channels() != 3) {
    throw Error(ErrorKind::kShape, "translate_to_sim expects a " + std::to_string(s) + "x" +
                                       std::to_string(s) + " RGB image");
  }
  if (image.domain() != ValueDomain::kNorm) {
    throw Error(ErrorKind::kDomain, "translate_to_sim expects a NORM image");
  }
  nn::NoGradGuard no_grad;
  const auto out = model.b2a(nn::constant(nn::to_batch(image)));
  return nn::to_image(out->value);
}

}  // namespace sim2seg::translation
