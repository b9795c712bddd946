#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "sim2seg/core.hpp"
#include "sim2seg/nn/layers.hpp"
#include "sim2seg/nn/optim.hpp"

namespace sim2seg::translation {

using nn::Tensor;
using nn::Var;

enum class AdvMode { kLeastSquares };
/// kIdentity makes both generators pass images through unchanged; used to
/// isolate the translation stage in ablations.
enum class GeneratorKind { kResnet, kIdentity };

struct TranslationHyper {
  double lambda_cycle = 10.0;
  double lambda_identity = 0.0;
  AdvMode adv_mode = AdvMode::kLeastSquares;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  int replay_buffer = 50;
  int image_size = 256;
  int iterations = 200000;
  int batch_size = 1;
  int ngf = 64;
  int ndf = 64;
  int residual_blocks = 0;  // 0 = 9 above 128 px, else 6
  int checkpoint_interval = 5000;
  GeneratorKind generator = GeneratorKind::kResnet;

  std::string check() const;
  int blocks() const {
    if (residual_blocks > 0) return residual_blocks;
    return image_size > 128 ? 9 : 6;
  }
};

/// Domain A is synthetic, domain B is real. gen_b2a is the adaptation map.
struct TranslationModel {
  TranslationHyper hyper;
  nn::ResnetGenerator<float> gen_a2b;
  nn::ResnetGenerator<float> gen_b2a;
  nn::PatchDiscriminator<float> disc_a;
  nn::PatchDiscriminator<float> disc_b;
  std::int64_t step = 0;

  Var<float> a2b(const Var<float>& x) const;
  Var<float> b2a(const Var<float>& x) const;

  nn::ParamList<float> generator_parameters() const;
  nn::ParamList<float> discriminator_parameters() const;
};

TranslationModel init_translation_model(const TranslationHyper& hyper, std::mt19937_64& rng);

/// Least-squares generator term: mean((D(fake) - 1)^2).
Var<float> lsgan_generator_loss(const Var<float>& fake_scores);
/// Least-squares discriminator term: ((D(real) - 1)^2 + D(fake)^2) / 2, each a mean.
Var<float> lsgan_discriminator_loss(const Var<float>& real_scores, const Var<float>& fake_scores);
/// Mean absolute reconstruction error.
Var<float> cycle_loss(const Var<float>& reconstructed, const Var<float>& original);

struct TranslationLosses {
  double adv_g_a2b = 0;
  double adv_g_b2a = 0;
  double cyc_a = 0;
  double cyc_b = 0;
  double idt = 0;
  double disc_a = 0;
  double disc_b = 0;
  double total_g = 0;
};

/// All loss terms for one pair of NORM batches, without updating anything.
/// Discriminator terms use the current fakes (no replay).
TranslationLosses translation_losses(const Tensor<float>& batch_a, const Tensor<float>& batch_b,
                                     const TranslationModel& model);

/// Pool of past generator outputs fed to the discriminators.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity = 50) : capacity_(capacity) {}

  /// Per image: while filling, store and return it; once full, with
  /// probability 1/2 return a stored image and replace it by the new one.
  Tensor<float> query(const Tensor<float>& fakes, std::mt19937_64& rng);

  int size() const { return static_cast<int>(images_.size()); }
  int capacity() const { return capacity_; }
  const std::vector<Tensor<float>>& images() const { return images_; }
  std::vector<Tensor<float>>& images() { return images_; }

 private:
  int capacity_;
  std::vector<Tensor<float>> images_;
};

struct LossRecord {
  std::int64_t step = 0;
  double learning_rate = 0;
  TranslationLosses losses;
};

/// Owns the optimization state: model, optimizers, replay buffers, RNG.
class TranslationTrainer {
 public:
  TranslationTrainer(TranslationModel model, std::uint64_t seed);

  /// One generator update followed by one discriminator update.
  /// Throws kTrainingFault on a non-finite loss or parameter.
  TranslationLosses step(const Tensor<float>& batch_a, const Tensor<float>& batch_b);

  /// Random batch indices drawn from the trainer's stream.
  std::vector<int> sample_indices(int count, int population);

  const TranslationModel& model() const { return model_; }
  TranslationModel& model() { return model_; }

  void save(const std::filesystem::path& dir, const TranslationLosses& snapshot) const;
  static TranslationTrainer load(const std::filesystem::path& dir);

 private:
  TranslationModel model_;
  nn::Adam<float> gen_opt_;
  nn::Adam<float> disc_opt_;
  ReplayBuffer pool_a_;
  ReplayBuffer pool_b_;
  std::mt19937_64 rng_;
};

/// Model-only checkpoint IO (inference use).
void save_translation_model(const TranslationModel& model, const std::filesystem::path& dir);
TranslationModel load_translation_model(const std::filesystem::path& dir);

using LossCallback = std::function<void(const LossRecord&)>;

/// Trains from scratch (or resumes from `checkpoint_dir` if it holds a
/// checkpoint) for `hyper.iterations` steps.
TranslationModel train_translation(const DomainDataset& synth, const DomainDataset& real,
                                   const TranslationHyper& hyper,
                                   const std::filesystem::path& checkpoint_dir, std::uint64_t seed,
                                   const LossCallback& on_step = {});

/// Applies the real-to-sim generator to one NORM RGB image at model size.
ImageBuffer translate_to_sim(const ImageBuffer& image, const TranslationModel& model);

}  // namespace sim2seg::translation
