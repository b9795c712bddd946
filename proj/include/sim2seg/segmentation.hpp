#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sim2seg/core.hpp"
#include "sim2seg/imaging.hpp"
#include "sim2seg/nn/layers.hpp"
#include "sim2seg/nn/optim.hpp"

namespace sim2seg::segmentation {

using nn::Tensor;
using nn::Var;

enum class AdvMode { kBinaryCrossEntropy };

/// How ground-truth instance masks are drawn as grayscale targets.
enum class TargetEncoding {
  kInstanceLevels,  // background 0, instance r of K at 64 + 191 r / (K-1)
  kBinary,          // background 0, every instance 255
};

struct SegHyper {
  double lambda_l1 = 100.0;
  AdvMode adv_mode = AdvMode::kBinaryCrossEntropy;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  imaging::InputMode input_mode = imaging::InputMode::kSobel;
  TargetEncoding target_encoding = TargetEncoding::kInstanceLevels;
  int image_size = 256;
  int iterations = 200000;
  int batch_size = 1;
  int ngf = 64;
  int ndf = 64;
  int levels = 0;  // 0 = log2(image_size), i.e. 8 at 256 px and 6 at 64 px
  double dropout = 0.5;
  int checkpoint_interval = 5000;
  int input_channels = 1;

  std::string check() const;
  int unet_levels() const;
};

struct SegmentationModel {
  SegHyper hyper;
  nn::UNetGenerator<float> gen;
  nn::PatchDiscriminator<float> disc;  // sees input ‖ mask channel stacks
  std::int64_t step = 0;

  Var<float> generate(const Var<float>& input, const nn::ForwardOptions& opt = {}) const;
  Var<float> discriminate(const Var<float>& input, const Var<float>& mask) const;
};

SegmentationModel init_segmentation_model(const SegHyper& hyper, std::mt19937_64& rng);

/// Grayscale rendering of an instance mask (U8, 1 channel).
ImageBuffer encode_mask_target(const InstanceMask& mask, TargetEncoding encoding);

struct TrainingPair {
  std::string ref;
  Tensor<float> input;   // [1, C, S, S] NORM
  Tensor<float> target;  // [1, 1, S, S] NORM
};

/// Preprocessed generator inputs paired with encoded targets, one per item.
/// Throws kData when an item has no mask.
std::vector<TrainingPair> make_training_pairs(const DomainDataset& dataset,
                                              const imaging::PreprocessSpec& spec,
                                              const SegHyper& hyper);

/// Conditional-GAN generator term: BCE of D(input ‖ fake) against 1.
Var<float> bce_generator_loss(const Var<float>& fake_logits);
/// (BCE(D(real), 1) + BCE(D(fake), 0)) / 2.
Var<float> bce_discriminator_loss(const Var<float>& real_logits, const Var<float>& fake_logits);

struct SegLosses {
  double adv_g = 0;
  double l1 = 0;           // mean |output - target|
  double l1_weighted = 0;  // lambda_l1 * l1
  double disc = 0;
  double total_g = 0;
};

/// Loss terms for one NORM batch with the current model, no update.
SegLosses segmentation_losses(const Tensor<float>& input, const Tensor<float>& target,
                              const SegmentationModel& model);

class SegmentationTrainer {
 public:
  SegmentationTrainer(SegmentationModel model, std::uint64_t seed);

  /// Discriminator update then generator update.
  SegLosses step(const Tensor<float>& input, const Tensor<float>& target);
  std::vector<int> sample_indices(int count, int population);

  const SegmentationModel& model() const { return model_; }
  SegmentationModel& model() { return model_; }

  void save(const std::filesystem::path& dir, const SegLosses& snapshot) const;
  static SegmentationTrainer load(const std::filesystem::path& dir);

 private:
  SegmentationModel model_;
  nn::Adam<float> gen_opt_;
  nn::Adam<float> disc_opt_;
  std::mt19937_64 rng_;
};

void save_segmentation_model(const SegmentationModel& model, const std::filesystem::path& dir);
SegmentationModel load_segmentation_model(const std::filesystem::path& dir);

using LossCallback = std::function<void(std::int64_t step, const SegLosses&)>;

SegmentationModel train_segmentation(const std::vector<TrainingPair>& pairs, const SegHyper& hyper,
                                     const std::filesystem::path& checkpoint_dir,
                                     std::uint64_t seed, const LossCallback& on_step = {});

/// Deterministic inference: [1,C,S,S] NORM input -> raw grayscale mask (U8).
ImageBuffer predict_mask(const Tensor<float>& input, const SegmentationModel& model);
ImageBuffer predict_mask(const ImageBuffer& input, const SegmentationModel& model);

}  // namespace sim2seg::segmentation
