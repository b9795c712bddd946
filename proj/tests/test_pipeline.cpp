#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "sim2seg/image_io.hpp"
#include "sim2seg/pipeline.hpp"

using namespace sim2seg;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "sim2seg_test_pipeline";

config::PipelineConfig tiny_config(const fs::path& root) {
  config::PipelineConfig c;
  c.scene.image_size = 32;
  c.scene.seed = 3;
  c.translation.image_size = 32;
  c.translation.ngf = 2;
  c.translation.ndf = 2;
  c.translation.residual_blocks = 1;
  c.translation.iterations = 2;
  c.segmentation.image_size = 32;
  c.segmentation.levels = 5;
  c.segmentation.ngf = 4;
  c.segmentation.ndf = 4;
  c.segmentation.iterations = 5;
  c.postproc.marker_min_distance = 2;
  c.postproc.min_instance_area = 2;
  c.paths.synth_dataset = (root / "synth").string();
  c.paths.real_images = (root / "real").string();
  c.paths.checkpoints = (root / "ckpt").string();
  c.paths.reports = (root / "reports").string();
  c.workers = 1;
  return c;
}

fs::path write_config(const config::PipelineConfig& c, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << config::to_json(c).dump(2);
  return path;
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + std::string(SIM2SEG_CLI_PATH) + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_real_images(const fs::path& dir, int count) {
  fs::create_directories(dir);
  std::mt19937_64 rng(12);
  for (int i = 0; i < count; ++i)
    io::write_png(dir / ("img" + std::to_string(i) + ".png"), oracle::random_u8(40, 30, 3, rng));
}

// Generated data, a random translation model and a briefly trained segmenter, built once.
const config::PipelineConfig& trained() {
  static const config::PipelineConfig c = [] {
    fs::remove_all(kRoot);
    auto cfg = tiny_config(kRoot / "trained");
    std::ostringstream log;
    pipeline::cmd_gen_data(cfg, 4, std::nullopt, log);
    write_real_images(cfg.paths.real_images, 3);
    pipeline::cmd_train_translate(cfg, log);
    pipeline::cmd_train_seg(cfg, log);
    return cfg;
  }();
  return c;
}

}  // namespace

TEST_CASE("cli exit codes") {
  const auto& cfg = trained();
  const auto dir = kRoot / "cli";
  const auto good = write_config(cfg, dir / "good.json");

  CHECK(run_cli("--print-default-config") == 0);
  CHECK(run_cli("gen-data --count 1") == 2);  // --config is required

  auto j = config::to_json(cfg);
  j["scene"]["spwan_box"] = j["scene"]["spawn_box"];
  std::ofstream(dir / "typo.json") << j.dump();
  CHECK(run_cli("gen-data --count 1 --config " + (dir / "typo.json").string()) == 2);
  CHECK(run_cli("gen-data --count 1 --config " + (dir / "absent.json").string()) == 2);

  auto empty = tiny_config(dir / "empty");
  const auto empty_cfg = write_config(empty, dir / "empty.json");
  CHECK(run_cli("infer --config " + empty_cfg.string() + " --input " + cfg.paths.real_images + " --out " +
                (dir / "out").string()) == 3);

  fs::create_directories(dir / "pred");
  fs::create_directories(dir / "gt");
  io::write_mask_png(dir / "gt" / "a.png", InstanceMask(4, 4));
  io::write_mask_png(dir / "gt" / "b.png", InstanceMask(4, 4));
  io::write_mask_png(dir / "pred" / "a.png", InstanceMask(4, 4));
  CHECK(run_cli("eval --config " + good.string() + " --pred " + (dir / "pred").string() + " --gt " +
                (dir / "gt").string()) == 4);

  CHECK(run_cli("gen-data --count 0 --config " + empty_cfg.string()) == 0);
  CHECK(fs::exists(fs::path(empty.paths.synth_dataset) / "manifest.json"));
}

TEST_CASE("gen-data through the cli is deterministic") {
  const auto dir = kRoot / "gen";
  auto a = tiny_config(dir / "a");
  auto b = tiny_config(dir / "b");
  CHECK(run_cli("gen-data --count 3 --seed 1 --config " + write_config(a, dir / "a.json").string()) == 0);
  CHECK(run_cli("gen-data --count 3 --seed 1 --config " + write_config(b, dir / "b.json").string()) == 0);
  CHECK(slurp(fs::path(a.paths.synth_dataset) / "manifest.json") ==
        slurp(fs::path(b.paths.synth_dataset) / "manifest.json"));
  for (const auto& e : fs::directory_iterator(fs::path(a.paths.synth_dataset) / "samples"))
    CHECK(slurp(e.path() / "rgb.png") ==
          slurp(fs::path(b.paths.synth_dataset) / "samples" / e.path().filename() / "rgb.png"));
}

TEST_CASE("infer writes every artifact and is deterministic") {
  const auto& cfg = trained();
  const auto out1 = kRoot / "infer1", out2 = kRoot / "infer2";
  std::ostringstream log;
  const auto r = pipeline::cmd_infer(cfg, cfg.paths.real_images, out1, false, log);
  pipeline::cmd_infer(cfg, cfg.paths.real_images, out2, false, log);
  REQUIRE(r.size() == 3);
  for (const auto& o : r) {
    CHECK(o.input.width() == 32);
    CHECK(o.instances.width() == 32);
    for (const char* suffix : {"_translated.png", "_raw_mask.png", "_instances.png", "_composite.png"}) {
      REQUIRE(fs::exists(out1 / (o.ref + suffix)));
      CHECK(slurp(out1 / (o.ref + suffix)) == slurp(out2 / (o.ref + suffix)));
    }
  }

  // One unreadable file is skipped, not fatal.
  const auto mixed = kRoot / "mixed";
  fs::create_directories(mixed);
  fs::copy_file(fs::path(cfg.paths.real_images) / "img0.png", mixed / "ok.png");
  std::ofstream(mixed / "broken.png") << "garbage";
  CHECK(pipeline::cmd_infer(cfg, mixed, kRoot / "infer3", false, log).size() == 1);
  CHECK(fs::exists(kRoot / "infer3" / "skipped.txt"));
}

TEST_CASE("identity translation matches skipping the stage") {
  auto cfg = trained();
  cfg.paths.checkpoints = (kRoot / "identity_ckpt").string();
  fs::create_directories(cfg.paths.checkpoints);
  fs::copy(pipeline::segmentation_checkpoint_dir(trained()), pipeline::segmentation_checkpoint_dir(cfg),
           fs::copy_options::recursive);
  cfg.translation.generator = translation::GeneratorKind::kIdentity;
  std::mt19937_64 rng(1);
  translation::save_translation_model(translation::init_translation_model(cfg.translation, rng),
                                      pipeline::translation_checkpoint_dir(cfg));
  std::ostringstream log;
  const auto with = pipeline::cmd_infer(cfg, cfg.paths.real_images, kRoot / "with", false, log);
  const auto without = pipeline::cmd_infer(cfg, cfg.paths.real_images, kRoot / "without", true, log);
  REQUIRE(with.size() == without.size());
  for (std::size_t i = 0; i < with.size(); ++i) {
    CHECK(with[i].translated == with[i].input);
    CHECK(with[i].raw_mask == without[i].raw_mask);
    CHECK(with[i].instances == without[i].instances);
  }
}

TEST_CASE("eval and ablate") {
  const auto& cfg = trained();
  std::ostringstream log;
  // Ground truth scored against itself.
  const auto gt = kRoot / "eval_gt";
  fs::create_directories(gt);
  for (const auto& e : fs::directory_iterator(fs::path(cfg.paths.synth_dataset) / "samples"))
    fs::copy_file(e.path() / "mask.png", gt / (e.path().filename().string() + ".png"));
  const auto report = pipeline::cmd_eval(cfg, gt, gt, "self", log);
  const auto table = slurp(report / "table.txt");
  CHECK(table.find("1.00±0.00") != std::string::npos);
  CHECK(fs::exists(report / "report.json"));
  CHECK(fs::exists(report / "report.csv"));

  const auto r = pipeline::cmd_ablate(cfg, cfg.paths.synth_dataset, log);
  CHECK(r.table.find("without Domain Adaptation") != std::string::npos);
  CHECK(r.table.find("with Domain Adaptation") != std::string::npos);
  CHECK(r.without.per_sample.size() == r.with.per_sample.size());
}

TEST_CASE("ablate fails before any work when a checkpoint is missing") {
  auto cfg = trained();
  cfg.paths.checkpoints = (kRoot / "half_ckpt").string();
  cfg.paths.reports = (kRoot / "half_reports").string();
  fs::create_directories(cfg.paths.checkpoints);
  fs::copy(pipeline::translation_checkpoint_dir(trained()), pipeline::translation_checkpoint_dir(cfg),
           fs::copy_options::recursive);
  std::ostringstream log;
  try {
    pipeline::cmd_ablate(cfg, cfg.paths.synth_dataset, log);
    FAIL("expected a missing artifact");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingArtifact);
    CHECK(std::string(e.what()).find("segmentation") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(cfg.paths.reports));
}

TEST_CASE("helpers") {
  InstanceMask m(2, 2, {1, 2, 3, 4});
  const auto up = pipeline::resize_nearest(m, 4, 4);
  CHECK(up.at(0, 0) == 1);
  CHECK(up.at(3, 0) == 2);
  CHECK(up.at(1, 3) == 3);
  CHECK(up.at(3, 3) == 4);
  CHECK(pipeline::resize_nearest(up, 2, 2) == m);

  std::vector<std::atomic<int>> hits(100);
  pipeline::parallel_for(100, 3, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) CHECK(h == 1);
  CHECK_THROWS(pipeline::parallel_for(10, 2, [](std::size_t i) {
    if (i == 7) throw Error(ErrorKind::kData, "boom");
  }));

  config::PipelineConfig c;
  c.workers = 3;
  unsetenv("SIM2SEG_WORKERS");
  CHECK(pipeline::worker_count(c) == 3);
  setenv("SIM2SEG_WORKERS", "2", 1);
  CHECK(pipeline::worker_count(c) == 2);
  unsetenv("SIM2SEG_WORKERS");

  const auto a = pipeline::make_report_dir(kRoot / "rep");
  const auto b = pipeline::make_report_dir(kRoot / "rep");
  CHECK(a != b);
  CHECK(fs::is_directory(a));
}
