#include "sim2seg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "sim2seg/image_io.hpp"
#include "sim2seg/nn/convert.hpp"

namespace sim2seg::pipeline {
namespace {

constexpr const char* kWithLabel = "with Domain Adaptation";
constexpr const char* kWithoutLabel = "without Domain Adaptation";
constexpr std::size_t kGridRows = 8;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

ImageBuffer to_rgb(const ImageBuffer& img) {
  if (img.channels() == 3) return img;
  ImageBuffer out(img.width(), img.height(), 3, ValueDomain::kU8);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y);
  return out;
}

/// Horizontal concatenation; every tile is scaled to the first tile's height.
ImageBuffer hconcat(const std::vector<ImageBuffer>& tiles) {
  const int h = tiles.front().height();
  std::vector<ImageBuffer> scaled;
  int w = 0;
  for (const auto& t : tiles) {
    ImageBuffer s = to_rgb(t);
    if (s.height() != h) s = imaging::resize_bilinear(s, s.width() * h / s.height(), h);
    w += s.width();
    scaled.push_back(std::move(s));
  }
  ImageBuffer out(w, h, 3, ValueDomain::kU8);
  int x0 = 0;
  for (const auto& s : scaled) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < s.width(); ++x)
        for (int c = 0; c < 3; ++c) out.at(x0 + x, y, c) = s.at(x, y, c);
    x0 += s.width();
  }
  return out;
}

ImageBuffer vconcat(const std::vector<ImageBuffer>& rows) {
  int w = 0, h = 0;
  for (const auto& r : rows) {
    w = std::max(w, r.width());
    h += r.height();
  }
  ImageBuffer out(w, h, 3, ValueDomain::kU8);
  int y0 = 0;
  for (const auto& r : rows) {
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x)
        for (int c = 0; c < 3; ++c) out.at(x, y0 + y, c) = r.at(x, y, c);
    y0 += r.height();
  }
  return out;
}

ImageBuffer colorize_at(const InstanceMask& mask, int size) {
  return io::colorize(resize_nearest(mask, size, size));
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return files;
}

struct LabeledSet {
  std::vector<std::string> refs;
  std::vector<ImageBuffer> images;
  std::vector<InstanceMask> masks;
};

LabeledSet load_labeled(const fs::path& root) {
  LabeledSet set;
  if (fs::is_directory(root / "samples")) {
    const DomainDataset ds = synthgen::load_synthetic_dataset(root);
    for (const auto& item : ds.items) {
      set.refs.push_back(item.ref);
      set.images.push_back(item.image);
      set.masks.push_back(*item.mask);
    }
    return set;
  }
  if (!fs::is_directory(root / "images") || !fs::is_directory(root / "masks")) {
    throw Error(ErrorKind::kMissingArtifact,
                root.string() + " holds neither samples/ nor images/ + masks/");
  }
  for (const auto& img : sorted_files(root / "images")) {
    const fs::path mask = root / "masks" / (img.stem().string() + ".png");
    if (!fs::exists(mask)) throw Error(ErrorKind::kData, "no mask for " + img.filename().string());
    set.refs.push_back(img.stem().string());
    set.images.push_back(io::read_rgb(img));
    set.masks.push_back(io::read_mask_png(mask));
  }
  return set;
}

void write_infer_outputs(const fs::path& dir, const InferOutput& o) {
  io::write_png(dir / (o.ref + "_translated.png"), o.translated);
  io::write_png(dir / (o.ref + "_raw_mask.png"), o.raw_mask);
  io::write_mask_png(dir / (o.ref + "_instances.png"), o.instances);
  io::write_png(dir / (o.ref + "_composite.png"), composite(o));
}

void write_report_files(const fs::path& dir, const std::string& stem,
                        const evaluation::EvalReport& r) {
  write_text(dir / (stem + ".json"), evaluation::report_json(r) + "\n");
  write_text(dir / (stem + ".csv"), evaluation::render_csv(r));
}

}  // namespace

int worker_count(const config::PipelineConfig& config) {
  if (const char* env = std::getenv("SIM2SEG_WORKERS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
      throw Error(ErrorKind::kConfig, std::string("SIM2SEG_WORKERS must be a positive integer, got '") + env + "'");
    }
    return static_cast<int>(v);
  }
  if (config.workers > 0) return config.workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::mutex m;
  std::exception_ptr fault;
  auto work = [&] {
    while (true) {
      {
        std::lock_guard lock(m);
        if (fault) return;
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!fault) fault = std::current_exception();
      }
    }
  };
  const int threads = static_cast<int>(std::min<std::size_t>(std::max(1, workers), std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (fault) std::rethrow_exception(fault);
}

fs::path make_report_dir(const fs::path& reports_root) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  fs::path dir = reports_root / stamp;
  for (int k = 1; fs::exists(dir); ++k) dir = reports_root / (std::string(stamp) + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
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

fs::path translation_checkpoint_dir(const config::PipelineConfig& c) {
  return fs::path(c.paths.checkpoints) / "translation";
}

fs::path segmentation_checkpoint_dir(const config::PipelineConfig& c) {
  return fs::path(c.paths.checkpoints) / "segmentation";
}

fs::path cmd_gen_data(const config::PipelineConfig& config, std::size_t count,
                      std::optional<std::uint64_t> seed, std::ostream& log) {
  synthgen::SceneConfig scene = config.scene;
  if (seed) scene.seed = *seed;
  if (count == 0) log << "warning: --count 0, writing an empty manifest\n";
  const auto manifest = synthgen::generate_dataset(scene, count, config.paths.synth_dataset,
                                                   worker_count(config));
  for (const auto& s : manifest.skipped) {
    log << "warning: sample " << s.index << " skipped: " << s.reason << "\n";
  }
  log << "wrote " << manifest.written << " samples, manifest " << manifest.path.string() << "\n";
  return manifest.path;
}

translation::TranslationModel cmd_train_translate(const config::PipelineConfig& config,
                                                  std::ostream& log) {
  const DomainDataset synth = synthgen::load_synthetic_dataset(config.paths.synth_dataset);
  const int s = config.translation.image_size;
  auto ingest = synthgen::ingest_real_images(config.paths.real_images, s, s);
  for (const auto& skip : ingest.skipped) log << "warning: skipped " << skip << "\n";
  for (const auto& w : ingest.warnings) log << "warning: " << w << "\n";
  const auto dir = translation_checkpoint_dir(config);
  const int every = std::max(1, config.translation.iterations / 20);
  auto model = translation::train_translation(
      synth, ingest.dataset, config.translation, dir, config.seed,
      [&](const translation::LossRecord& r) {
        if ((r.step + 1) % every == 0) {
          log << "step " << r.step + 1 << " total_g " << r.losses.total_g << " cyc "
              << r.losses.cyc_a + r.losses.cyc_b << " disc " << r.losses.disc_a + r.losses.disc_b
              << "\n";
        }
      });
  log << "translation checkpoint at " << dir.string() << " (step " << model.step << ")\n";
  return model;
}

segmentation::SegmentationModel cmd_train_seg(const config::PipelineConfig& config,
                                              std::ostream& log) {
  const DomainDataset synth = synthgen::load_synthetic_dataset(config.paths.synth_dataset);
  const auto pairs = segmentation::make_training_pairs(synth, config.preprocess, config.segmentation);
  const auto dir = segmentation_checkpoint_dir(config);
  const int every = std::max(1, config.segmentation.iterations / 20);
  auto model = segmentation::train_segmentation(
      pairs, config.segmentation, dir, config.seed,
      [&](std::int64_t step, const segmentation::SegLosses& l) {
        if ((step + 1) % every == 0) {
          log << "step " << step + 1 << " adv " << l.adv_g << " l1 " << l.l1 << " disc " << l.disc
              << "\n";
        }
      });
  log << "segmentation checkpoint at " << dir.string() << " (step " << model.step << ")\n";
  return model;
}

InferenceModels load_inference_models(const config::PipelineConfig& config, bool skip_translation) {
  InferenceModels m;
  if (!skip_translation) {
    try {
      m.translation = translation::load_translation_model(translation_checkpoint_dir(config));
    } catch (const Error& e) {
      throw Error(e.kind(), std::string("translation stage: ") + e.what());
    }
  }
  try {
    m.segmentation = segmentation::load_segmentation_model(segmentation_checkpoint_dir(config));
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("segmentation stage: ") + e.what());
  }
  return m;
}

InferOutput infer_image(const ImageBuffer& rgb, const std::string& ref,
                        const config::PipelineConfig& config, const InferenceModels& models) {
  InferOutput out;
  out.ref = ref;
  const int ts = models.translation ? models.translation->hyper.image_size : config.translation.image_size;
  out.input = imaging::resize_bilinear(rgb, ts, ts);
  out.translated = models.translation
                       ? imaging::denormalize(translation::translate_to_sim(
                             imaging::normalize(out.input), *models.translation))
                       : out.input;
  const auto& seg = models.segmentation;
  const int ss = seg.hyper.image_size;
  const ImageBuffer seg_rgb = imaging::resize_bilinear(out.translated, ss, ss);
  const auto planes = imaging::preprocess_for_segmentation(seg_rgb, config.preprocess, seg.hyper.input_mode);
  out.raw_mask = segmentation::predict_mask(nn::stack_planes(planes), seg);
  out.instances = postproc::extract_instances(out.raw_mask, config.postproc);
  return out;
}

ImageBuffer composite(const InferOutput& out) {
  return hconcat({out.input, out.translated, colorize_at(out.instances, out.input.height())});
}

std::vector<InferOutput> cmd_infer(const config::PipelineConfig& config, const fs::path& input,
                                   const fs::path& out_dir, bool skip_translation,
                                   std::ostream& log) {
  const InferenceModels models = load_inference_models(config, skip_translation);
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    files = sorted_files(input);
  } else if (fs::is_regular_file(input)) {
    files.push_back(input);
  } else {
    throw Error(ErrorKind::kMissingArtifact, "input " + input.string() + " does not exist");
  }
  fs::create_directories(out_dir);

  std::vector<std::optional<InferOutput>> results(files.size());
  std::vector<std::string> skipped(files.size());
  parallel_for(files.size(), worker_count(config), [&](std::size_t i) {
    ImageBuffer rgb;
    try {
      rgb = io::read_rgb(files[i]);
    } catch (const Error& e) {
      skipped[i] = files[i].filename().string() + ": " + e.what();
      return;
    }
    results[i] = infer_image(rgb, files[i].stem().string(), config, models);
    write_infer_outputs(out_dir, *results[i]);
  });

  std::vector<InferOutput> out;
  std::string skip_list;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (results[i]) {
      out.push_back(std::move(*results[i]));
    } else {
      log << "warning: skipped " << skipped[i] << "\n";
      skip_list += skipped[i] + "\n";
    }
  }
  if (!skip_list.empty()) write_text(out_dir / "skipped.txt", skip_list);
  log << "inferred " << out.size() << " images into " << out_dir.string()
      << (skip_translation ? " (translation skipped)" : "") << "\n";
  return out;
}

evaluation::EvalReport evaluate_dirs(const config::PipelineConfig& config, const fs::path& pred_dir,
                                     const fs::path& gt_dir, const std::string& label) {
  for (const auto& d : {pred_dir, gt_dir}) {
    if (!fs::is_directory(d)) throw Error(ErrorKind::kMissingArtifact, d.string() + " is not a directory");
  }
  std::vector<fs::path> gts, preds;
  for (const auto& f : sorted_files(gt_dir))
    if (f.extension() == ".png") gts.push_back(f);
  std::size_t pred_count = 0;
  for (const auto& f : sorted_files(pred_dir)) {
    const std::string stem = f.stem().string();
    const bool suffixed = stem.size() > 10 && stem.compare(stem.size() - 10, 10, "_instances") == 0;
    const bool other_artifact = stem.ends_with("_translated") || stem.ends_with("_raw_mask") ||
                                stem.ends_with("_composite");
    if (f.extension() == ".png" && (suffixed || !other_artifact)) ++pred_count;
  }
  if (pred_count != gts.size()) {
    throw Error(ErrorKind::kData, "found " + std::to_string(pred_count) + " predicted masks but " +
                                      std::to_string(gts.size()) + " ground-truth masks");
  }
  std::vector<InstanceMask> pm(gts.size()), gm(gts.size());
  std::vector<std::string> refs(gts.size());
  parallel_for(gts.size(), worker_count(config), [&](std::size_t i) {
    const std::string stem = gts[i].stem().string();
    fs::path p = pred_dir / (stem + ".png");
    if (!fs::exists(p)) p = pred_dir / (stem + "_instances.png");
    if (!fs::exists(p)) throw Error(ErrorKind::kData, "no prediction for " + gts[i].filename().string());
    gm[i] = io::read_mask_png(gts[i]);
    pm[i] = resize_nearest(io::read_mask_png(p), gm[i].width(), gm[i].height());
    refs[i] = stem;
  });
  return evaluation::evaluate_dataset(pm, gm, refs, label, config.eval);
}

fs::path cmd_eval(const config::PipelineConfig& config, const fs::path& pred_dir,
                  const fs::path& gt_dir, const std::string& label, std::ostream& log) {
  const auto report = evaluate_dirs(config, pred_dir, gt_dir, label);
  const fs::path dir = make_report_dir(config.paths.reports);
  write_report_files(dir, "report", report);
  const std::string table = evaluation::render_table({report});
  write_text(dir / "table.txt", table);
  for (const auto& s : report.skipped) log << "note: " << s << " has no ground-truth instances, skipped\n";
  log << table << "report in " << dir.string() << "\n";
  return dir;
}

AblationResult cmd_ablate(const config::PipelineConfig& config, const fs::path& labeled_dir,
                          std::ostream& log) {
  // Fail fast: both stages must load before any image is touched.
  const InferenceModels with_models = load_inference_models(config, false);
  const InferenceModels without_models{std::nullopt, with_models.segmentation};
  const LabeledSet set = load_labeled(labeled_dir);

  AblationResult result;
  result.report_dir = make_report_dir(config.paths.reports);
  const std::size_t n = set.images.size();
  std::vector<InferOutput> with_out(n), without_out(n);
  for (const char* arm : {"with", "without"}) fs::create_directories(result.report_dir / arm);
  parallel_for(n, worker_count(config), [&](std::size_t i) {
    without_out[i] = infer_image(set.images[i], set.refs[i], config, without_models);
    with_out[i] = infer_image(set.images[i], set.refs[i], config, with_models);
    write_infer_outputs(result.report_dir / "without", without_out[i]);
    write_infer_outputs(result.report_dir / "with", with_out[i]);
  });

  auto evaluate = [&](const std::vector<InferOutput>& outs, const char* label) {
    std::vector<InstanceMask> preds;
    for (std::size_t i = 0; i < n; ++i) {
      preds.push_back(resize_nearest(outs[i].instances, set.masks[i].width(), set.masks[i].height()));
    }
    return evaluation::evaluate_dataset(preds, set.masks, set.refs, label, config.eval);
  };
  result.without = evaluate(without_out, kWithoutLabel);
  result.with = evaluate(with_out, kWithLabel);
  result.table = evaluation::render_table({result.without, result.with});

  write_report_files(result.report_dir, "report_without", result.without);
  write_report_files(result.report_dir, "report_with", result.with);
  write_text(result.report_dir / "table.txt", result.table);

  // Grid: input | without | translated | with | ground truth.
  std::vector<ImageBuffer> rows;
  for (std::size_t i = 0; i < std::min(n, kGridRows); ++i) {
    const int s = with_out[i].input.height();
    rows.push_back(hconcat({with_out[i].input, colorize_at(without_out[i].instances, s),
                            with_out[i].translated, colorize_at(with_out[i].instances, s),
                            colorize_at(set.masks[i], s)}));
  }
  if (!rows.empty()) io::write_png(result.report_dir / "grid.png", vconcat(rows));
  log << result.table << "report in " << result.report_dir.string() << "\n";
  return result;
}

}  // namespace sim2seg::pipeline
