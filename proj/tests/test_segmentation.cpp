#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "sim2seg/nn/convert.hpp"
#include "sim2seg/segmentation.hpp"
#include "toy_tasks.hpp"

using namespace sim2seg;
using namespace sim2seg::segmentation;
namespace fs = std::filesystem;

namespace {

SegHyper tiny_hyper(int iterations = 10) {
  SegHyper h;
  h.image_size = 32;
  h.ngf = 4;
  h.ndf = 4;
  h.iterations = iterations;
  return h;
}

nn::Tensor<float> random_input(std::mt19937_64& rng, int c = 1, int size = 32) {
  nn::Tensor<float> t(1, c, size, size);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

nn::Var<float> filled(float v) { return nn::constant(nn::Tensor<float>::constant({1, 1, 4, 4}, v)); }

std::set<float> levels(const ImageBuffer& img) {
  std::set<float> s;
  for (Eigen::Index i = 0; i < img.data().size(); ++i)
    if (img.data()[i] != 0) s.insert(img.data()[i]);
  return s;
}

}  // namespace

TEST_CASE("hyper defaults and level count") {
  SegHyper h;
  CHECK(h.lambda_l1 == 100.0);
  CHECK(h.learning_rate == doctest::Approx(2e-4));
  CHECK(h.adam_beta1 == 0.5);
  CHECK(h.input_mode == imaging::InputMode::kSobel);
  CHECK(h.unet_levels() == 8);
  h.image_size = 64;
  CHECK(h.unet_levels() == 6);
  CHECK(h.check().empty());
  h.levels = 7;
  CHECK_FALSE(h.check().empty());  // 64 is not divisible by 2^7
  h.levels = 0;
  h.lambda_l1 = -1;
  CHECK_FALSE(h.check().empty());
}

TEST_CASE("mask target encoding") {
  InstanceMask m(4, 2, {0, 5, 5, 0, 9, 9, 2, 0});
  const auto t = encode_mask_target(m, TargetEncoding::kInstanceLevels);
  CHECK(levels(t) == std::set<float>{64, 160, 255});  // ranks 0, 1, 2 of ids 2, 5, 9
  CHECK(t.at(2, 1) == 64);
  CHECK(t.at(1, 0) == 160);
  CHECK(t.at(0, 1) == 255);
  CHECK(t.at(0, 0) == 0);

  InstanceMask one(2, 2, {0, 3, 3, 3});
  CHECK(levels(encode_mask_target(one, TargetEncoding::kInstanceLevels)) == std::set<float>{255});
  CHECK(levels(encode_mask_target(m, TargetEncoding::kBinary)) == std::set<float>{255});
  CHECK((encode_mask_target(InstanceMask(3, 3), TargetEncoding::kInstanceLevels).data() == 0).all());

  // Any number of instances up to 192 gets distinct levels.
  InstanceMask many(20, 10);
  for (std::size_t i = 0; i < many.size(); ++i) many[i] = static_cast<InstanceMask::Id>(i % 150 + 1);
  CHECK(levels(encode_mask_target(many, TargetEncoding::kInstanceLevels)).size() == 150);
}

TEST_CASE("training pairs") {
  std::mt19937_64 rng(1);
  DomainDataset d;
  d.tag = DomainTag::kSynth;
  const auto rgb = oracle::random_u8(32, 32, 3, rng);
  InstanceMask three(32, 32);
  three.at(1, 1) = 1;
  three.at(5, 5) = 2;
  three.at(9, 9) = 3;
  d.items.push_back({"a", rgb, three});
  d.items.push_back({"b", rgb, InstanceMask(32, 32)});
  const auto pairs = make_training_pairs(d, {}, tiny_hyper());
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].input.shape() == nn::Tensor<float>::Shape{1, 1, 32, 32});
  const auto expected = imaging::normalize(oracle::sobel(imaging::to_grayscale(rgb), false));
  CHECK(nn::to_image(pairs[0].input) == expected);
  CHECK(levels(imaging::denormalize(nn::to_image(pairs[0].target))).size() == 3);
  CHECK((pairs[1].target.values() == -1.f).all());

  d.items.push_back({"c", rgb, std::nullopt});
  try {
    make_training_pairs(d, {}, tiny_hyper());
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
  }
}

TEST_CASE("conditional GAN loss fixtures") {
  const double ln2 = std::log(2.0);
  CHECK(nn::item(bce_generator_loss(filled(0.f))) == doctest::Approx(ln2).epsilon(1e-6));
  CHECK(nn::item(bce_discriminator_loss(filled(0.f), filled(0.f))) == doctest::Approx(ln2).epsilon(1e-6));
  CHECK(nn::item(bce_generator_loss(filled(2.f))) == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-6));
  CHECK(nn::item(bce_discriminator_loss(filled(2.f), filled(-2.f))) ==
        doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-6));
  // |output - target| = 0.1 everywhere, weighted by 100.
  const auto l1 = nn::l1(filled(0.3f), filled(0.2f));
  CHECK(nn::item(l1) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(nn::item(nn::weighted_sum<float>({{100.f, l1}})) == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("loss composition") {
  std::mt19937_64 rng(2);
  auto h = tiny_hyper();
  const auto m = init_segmentation_model(h, rng);
  const auto x = random_input(rng);
  const auto y = random_input(rng);
  const auto l = segmentation_losses(x, y, m);
  CHECK(l.l1_weighted == doctest::Approx(100.0 * l.l1).epsilon(1e-6));
  CHECK(l.total_g == doctest::Approx(l.adv_g + l.l1_weighted).epsilon(1e-6));

  h.lambda_l1 = 0;
  std::mt19937_64 rng2(2);
  const auto m0 = init_segmentation_model(h, rng2);
  const auto l0 = segmentation_losses(x, y, m0);
  CHECK(l0.total_g == doctest::Approx(l0.adv_g).epsilon(1e-6));

  // The generator's own output as target gives zero L1.
  nn::NoGradGuard guard;
  const auto own = m.generate(nn::constant(x))->value;
  CHECK(segmentation_losses(x, own, m).l1 == doctest::Approx(0.0));
}

TEST_CASE("predict_mask contract") {
  std::mt19937_64 rng(3);
  const auto m = init_segmentation_model(tiny_hyper(), rng);
  const auto x = random_input(rng);
  const auto a = predict_mask(x, m);
  CHECK(a == predict_mask(x, m));
  CHECK(a.width() == 32);
  CHECK(a.channels() == 1);
  CHECK(a.domain() == ValueDomain::kU8);
  try {
    predict_mask(random_input(rng, 1, 64), m);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
  }
  CHECK_THROWS(predict_mask(random_input(rng, 2), m));

  auto h2 = tiny_hyper();
  h2.input_mode = imaging::InputMode::kGraySobel;
  h2.input_channels = 2;
  const auto m2 = init_segmentation_model(h2, rng);
  CHECK(predict_mask(random_input(rng, 2), m2).width() == 32);
}

TEST_CASE("bottleneck and outermost skip both feed the output") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    nn::UNetGenerator<float> g(1, 1, 8, 5, 0.5, rng);
    const auto x = nn::constant(random_input(rng));
    nn::NoGradGuard guard;
    const auto base = g(x)->value.values();
    const auto no_bottleneck = g(x, {}, {true, false})->value.values();
    const auto no_skip = g(x, {}, {false, true})->value.values();
    REQUIRE((no_bottleneck - base).abs().maxCoeff() > 1e-4f);
    REQUIRE((no_skip - base).abs().maxCoeff() > 1e-4f);
    REQUIRE((no_skip - no_bottleneck).abs().maxCoeff() > 1e-4f);
    REQUIRE((g(x, {}, {true, false})->value.values() == no_bottleneck).all());
  }
}

TEST_CASE("dropout is active only while training") {
  std::mt19937_64 rng(5);
  nn::UNetGenerator<float> g(1, 1, 4, 5, 0.5, rng);
  const auto x = nn::constant(random_input(rng));
  nn::NoGradGuard guard;
  CHECK((g(x)->value.values() == g(x)->value.values()).all());
  std::mt19937_64 r1(1), r2(2);
  nn::ForwardOptions train1{true, &r1}, train2{true, &r2};
  CHECK_FALSE((g(x, train1)->value.values() == g(x, train2)->value.values()).all());
}

TEST_CASE("trainer determinism and resume") {
  std::mt19937_64 data_rng(6);
  std::vector<nn::Tensor<float>> xs, ys;
  for (int i = 0; i < 6; ++i) {
    xs.push_back(random_input(data_rng));
    ys.push_back(random_input(data_rng));
  }
  auto fresh = [] {
    std::mt19937_64 init(3);
    return SegmentationTrainer(init_segmentation_model(tiny_hyper(6), init), 11);
  };
  auto a = fresh();
  auto b = fresh();
  std::vector<SegLosses> run;
  for (int i = 0; i < 6; ++i) {
    run.push_back(a.step(xs[i], ys[i]));
    CHECK(b.step(xs[i], ys[i]).total_g == run.back().total_g);
  }
  const auto dir = fs::temp_directory_path() / "sim2seg_test_seg_resume";
  fs::remove_all(dir);
  auto c = fresh();
  for (int i = 0; i < 3; ++i) c.step(xs[i], ys[i]);
  c.save(dir, {});
  auto d = SegmentationTrainer::load(dir);
  for (int i = 3; i < 6; ++i) {
    const auto l = d.step(xs[i], ys[i]);
    CHECK(l.total_g == run[i].total_g);
    CHECK(l.disc == run[i].disc);
  }
  fs::remove_all(dir);
}

TEST_CASE("train_segmentation") {
  CHECK_THROWS_AS(train_segmentation({}, tiny_hyper(), {}, 1), Error);

  const auto dir = fs::temp_directory_path() / "sim2seg_test_seg_train";
  fs::remove_all(dir);
  std::mt19937_64 rng(7);
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 3; ++i) pairs.push_back({std::to_string(i), random_input(rng), random_input(rng)});
  auto h = tiny_hyper(3);
  int calls = 0;
  const auto m = train_segmentation(pairs, h, dir, 1, [&](std::int64_t, const SegLosses&) { ++calls; });
  CHECK(calls == 3);
  CHECK(fs::exists(dir / "model.ckpt"));
  CHECK(fs::exists(dir / "losses.jsonl"));
  const auto loaded = load_segmentation_model(dir);
  CHECK(predict_mask(pairs[0].input, loaded) == predict_mask(pairs[0].input, m));
  fs::remove_all(dir);
  try {
    load_segmentation_model(dir);
    FAIL("expected a missing artifact");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingArtifact);
  }
}

TEST_CASE("a short training run beats the untrained model on held-out pairs") {
  auto h = toy::seg_hyper(300);
  h.ngf = 8;
  h.ndf = 8;
  const auto data = toy::seg_data(h, 60, 10);
  std::mt19937_64 init(5);
  const auto untrained = init_segmentation_model(h, init);
  const auto trained = train_segmentation(data.train, h, {}, 5);
  auto mae = [&](const SegmentationModel& m) {
    double sum = 0;
    for (const auto& p : data.test) {
      const auto pred = predict_mask(p.input, m);
      const auto target = imaging::denormalize(nn::to_image(p.target));
      sum += (pred.data() - target.data()).abs().mean();
    }
    return sum / static_cast<double>(data.test.size());
  };
  const double before = mae(untrained), after = mae(trained);
  MESSAGE("held-out MAE " << before << " -> " << after);
  CHECK(after < before);
}
