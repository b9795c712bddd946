#include "sim2seg/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sim2seg/config.hpp"
#include "sim2seg/image_io.hpp"
#include "sim2seg/imaging.hpp"

namespace sim2seg::synthgen {
namespace fs = std::filesystem;
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLightDistance = 1.0;  // meters from the tray centre
constexpr double kCameraClearance = 0.05;
constexpr std::array<double, 3> kFloorColor{70, 72, 80};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::array<std::uint8_t, 3> hsv_color(double h, double s, double v) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  auto to8 = [](double t) { return static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255)); };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

std::vector<Eigen::Matrix3d> axis_rotations() {
  std::vector<Eigen::Matrix3d> out;
  const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& p : perms) {
    for (int signs = 0; signs < 8; ++signs) {
      Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
      for (int r = 0; r < 3; ++r) m(r, p[r]) = (signs >> r) & 1 ? -1.0 : 1.0;
      if (m.determinant() > 0) out.push_back(m);
    }
  }
  return out;
}

bool open_overlap(double a0, double a1, double b0, double b1) { return a0 < b1 && b0 < a1; }

struct PlacedBox {
  std::uint32_t id;
  Eigen::Vector3d center;
  Eigen::Vector3d half;
  std::array<std::uint8_t, 3> color;
};

std::vector<PlacedBox> placed_boxes(const SettledScene& scene) {
  std::vector<PlacedBox> out;
  for (const auto& pose : scene.poses) {
    BoxAsset asset;
    try {
      asset = parse_box_asset(pose.asset_ref);
    } catch (const Error& e) {
      throw Error(ErrorKind::kRender, std::string("no renderable asset: ") + e.what());
    }
    out.push_back({pose.object_id, pose.position, world_half_extents(asset, pose.orientation),
                   asset.color});
  }
  return out;
}

double shade(const Eigen::Vector3d& point, const Eigen::Vector3d& light_pos, double intensity) {
  const Eigen::Vector3d l = (light_pos - point).normalized();
  return 0.35 + 0.65 * intensity * std::max(0.0, l.z());
}

nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
nlohmann::json quat_json(const Eigen::Quaterniond& q) { return {q.w(), q.x(), q.y(), q.z()}; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

}  // namespace

std::string LightRandomization::check() const {
  if (!(azimuth_min <= azimuth_max)) return "light.azimuth range is reversed";
  if (!(elevation_min <= elevation_max)) return "light.elevation range is reversed";
  if (!(intensity_min <= intensity_max)) return "light.intensity range is reversed";
  if (elevation_min <= 0 || elevation_max > kPi / 2) return "light.elevation must lie in (0, pi/2]";
  if (intensity_min < 0) return "light.intensity must be >= 0";
  return {};
}

std::vector<std::string> SceneConfig::default_asset_pool() {
  return {"box:0.100x0.060x0.040", "box:0.080x0.080x0.050", "box:0.120x0.050x0.050",
          "box:0.060x0.060x0.060", "box:0.090x0.070x0.030", "box:0.140x0.040x0.040",
          "box:0.070x0.050x0.090", "box:0.110x0.080x0.025", "box:0.050x0.050x0.120",
          "box:0.100x0.100x0.035", "box:0.130x0.060x0.030", "box:0.075x0.045x0.045",
          "box:0.095x0.055x0.070", "box:0.085x0.085x0.085", "box:0.150x0.070x0.020",
          "box:0.065x0.040x0.030"};
}

std::string SceneConfig::check() const {
  if (!(spawn_box.array() > 0).all()) return "scene.spawn_box must be strictly positive";
  if (!(tray_inner_size.array() > 0).all()) return "scene.tray_inner_size must be strictly positive";
  if (spawn_offset_z < 0) return "scene.spawn_offset_z must be >= 0";
  if (!(camera_height > spawn_offset_z + spawn_box.z())) {
    return "scene.camera_height must be above the spawn box";
  }
  if (!(camera_fov > 0 && camera_fov < kPi)) return "scene.camera_fov must lie in (0, pi)";
  if (n_objects_choices.empty()) return "scene.n_objects_choices must not be empty";
  for (int n : n_objects_choices)
    if (n < 1) return "scene.n_objects_choices entries must be >= 1";
  if (asset_pool.empty()) return "scene.asset_pool must not be empty";
  if (image_size < 1) return "scene.image_size must be >= 1";
  if (auto bad = light.check(); !bad.empty()) return "scene." + bad;
  if (auto bad = noise.check_invariants(); !bad.empty()) return "scene.noise." + bad;
  return {};
}

CameraModel SceneConfig::camera() const {
  return CameraModel::looking_down(tray_center, camera_height, image_size, image_size, camera_fov);
}

BoxAsset parse_box_asset(const std::string& ref) {
  double l = 0, w = 0, h = 0;
  char tail = 0;
  if (ref.rfind("box:", 0) != 0 ||
      std::sscanf(ref.c_str() + 4, "%lfx%lfx%lf%c", &l, &w, &h, &tail) != 3 || !(l > 0) ||
      !(w > 0) || !(h > 0)) {
    throw Error(ErrorKind::kConfig, "asset ref '" + ref + "' is not of the form box:LxWxH");
  }
  const std::uint64_t hash = fnv1a(ref);
  const double hue = static_cast<double>(hash % 360);
  const double sat = 0.55 + 0.35 * static_cast<double>((hash >> 16) % 101) / 100.0;
  const double val = 0.70 + 0.30 * static_cast<double>((hash >> 32) % 101) / 100.0;
  return {Eigen::Vector3d(l, w, h) / 2.0, hsv_color(hue, sat, val)};
}

Eigen::Vector3d world_half_extents(const BoxAsset& asset, const Eigen::Quaterniond& q) {
  return q.toRotationMatrix().cwiseAbs() * asset.half_extents;
}

Eigen::Quaterniond snap_to_axis_rotation(const Eigen::Quaterniond& q) {
  static const std::vector<Eigen::Matrix3d> rotations = axis_rotations();
  const Eigen::Matrix3d r = q.toRotationMatrix();
  const Eigen::Matrix3d* best = &rotations.front();
  double best_score = -1e300;
  for (const auto& m : rotations) {
    const double score = (m.transpose() * r).trace();
    if (score > best_score) {
      best_score = score;
      best = &m;
    }
  }
  Eigen::Quaterniond out(*best);
  out.normalize();
  return out;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::kDomain, "uniform_index needs n > 0");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

Eigen::Quaterniond uniform_quaternion(std::mt19937_64& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double u3 = uniform01(rng);
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  Eigen::Quaterniond q(b * std::cos(2 * kPi * u3), a * std::sin(2 * kPi * u2),
                       a * std::cos(2 * kPi * u2), b * std::sin(2 * kPi * u3));
  q.normalize();
  return q;
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index));
}

SceneSpec sample_scene(const SceneConfig& config, std::mt19937_64& rng) {
  if (auto bad = config.check(); !bad.empty()) throw Error(ErrorKind::kConfig, bad);
  SceneSpec spec;
  const int n = config.n_objects_choices[uniform_index(rng, config.n_objects_choices.size())];
  if (static_cast<std::size_t>(n) > config.asset_pool.size()) {
    throw Error(ErrorKind::kConfig, "scene.asset_pool has " +
                                        std::to_string(config.asset_pool.size()) +
                                        " kinds but " + std::to_string(n) + " were drawn");
  }
  // Partial Fisher-Yates: n distinct kinds.
  std::vector<std::size_t> order(config.asset_pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const Eigen::Vector3d lo(config.tray_center.x() - config.spawn_box.x() / 2,
                           config.tray_center.y() - config.spawn_box.y() / 2,
                           config.tray_center.z() + config.spawn_offset_z);
  for (int i = 0; i < n; ++i) {
    const std::size_t j = i + uniform_index(rng, order.size() - i);
    std::swap(order[i], order[j]);
    ObjectDraw draw;
    draw.asset_ref = config.asset_pool[order[i]];
    for (int k = 0; k < 3; ++k) draw.position[k] = lo[k] + uniform01(rng) * config.spawn_box[k];
    draw.orientation = uniform_quaternion(rng);
    spec.object_draws.push_back(std::move(draw));
  }
  const auto& lr = config.light;
  spec.light.azimuth = lr.azimuth_min + uniform01(rng) * (lr.azimuth_max - lr.azimuth_min);
  spec.light.elevation = lr.elevation_min + uniform01(rng) * (lr.elevation_max - lr.elevation_min);
  spec.light.intensity = lr.intensity_min + uniform01(rng) * (lr.intensity_max - lr.intensity_min);
  return spec;
}

SettledScene BoxStackingSettler::settle(const SceneSpec& spec) const {
  const std::size_t n = spec.object_draws.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return spec.object_draws[a].position.z() < spec.object_draws[b].position.z();
  });

  const double floor_z = config_.tray_center.z();
  const Eigen::Vector2d tray_lo = config_.tray_center.head<2>() - config_.tray_inner_size / 2;
  const Eigen::Vector2d tray_hi = config_.tray_center.head<2>() + config_.tray_inner_size / 2;

  SettledScene out;
  out.poses.resize(n);
  out.contact_ok.assign(n, true);
  std::vector<Eigen::Vector3d> lo(n), hi(n);
  std::vector<char> placed(n, 0);
  for (std::size_t i : order) {
    const auto& draw = spec.object_draws[i];
    BoxAsset asset;
    try {
      asset = parse_box_asset(draw.asset_ref);
    } catch (const Error& e) {
      throw Error(ErrorKind::kSettling, e.what());
    }
    const Eigen::Quaterniond q = snap_to_axis_rotation(draw.orientation);
    // The snapped matrix is a signed permutation; rounding removes float noise.
    const Eigen::Vector3d half =
        q.toRotationMatrix().array().round().abs().matrix() * asset.half_extents;
    Eigen::Vector3d c = draw.position;
    for (int k = 0; k < 2; ++k) {
      const double a = tray_lo[k] + half[k];
      const double b = tray_hi[k] - half[k];
      c[k] = a <= b ? std::clamp(c[k], a, b) : config_.tray_center[k];
    }
    double rest = floor_z;
    for (std::size_t j = 0; j < n; ++j) {
      if (!placed[j]) continue;
      if (open_overlap(c.x() - half.x(), c.x() + half.x(), lo[j].x(), hi[j].x()) &&
          open_overlap(c.y() - half.y(), c.y() + half.y(), lo[j].y(), hi[j].y())) {
        rest = std::max(rest, hi[j].z());
      }
    }
    c.z() = rest + half.z();
    if (rest + 2 * half.z() > floor_z + config_.camera_height - kCameraClearance) {
      throw Error(ErrorKind::kSettling, "stack reaches the camera at object " + std::to_string(i + 1));
    }
    lo[i] = c - half;
    hi[i] = c + half;
    lo[i].z() = rest;
    hi[i].z() = rest + 2 * half.z();
    placed[i] = 1;
    out.poses[i] = {static_cast<std::uint32_t>(i + 1), c, q, draw.asset_ref};
  }

  // Overlapping footprints must have disjoint height intervals.
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (open_overlap(lo[a].x(), hi[a].x(), lo[b].x(), hi[b].x()) &&
          open_overlap(lo[a].y(), hi[a].y(), lo[b].y(), hi[b].y()) &&
          open_overlap(lo[a].z(), hi[a].z(), lo[b].z(), hi[b].z())) {
        throw Error(ErrorKind::kSettling, "boxes " + std::to_string(a + 1) + " and " +
                                              std::to_string(b + 1) + " interpenetrate");
      }
    }
  }
  return out;
}

RenderOutput FlatBoxRenderer::render(const SettledScene& scene, const CameraModel& camera,
                                     const LightSpec& light) const {
  if (auto bad = camera.check_invariants(); !bad.empty()) throw Error(ErrorKind::kRender, bad);
  auto boxes = placed_boxes(scene);
  // Highest top face first so the first hit along a ray is the front-most.
  std::stable_sort(boxes.begin(), boxes.end(), [](const PlacedBox& a, const PlacedBox& b) {
    return a.center.z() + a.half.z() > b.center.z() + b.half.z();
  });

  const int w = camera.width;
  const int h = camera.height;
  RenderOutput out{ImageBuffer(w, h, 3, ValueDomain::kU8), DepthMap::Zero(h, w),
                   InstanceMask(w, h)};
  const Eigen::Matrix3d rot = camera.orientation.toRotationMatrix();
  const Eigen::Vector3d light_pos =
      config_.tray_center + kLightDistance * Eigen::Vector3d(std::cos(light.elevation) * std::cos(light.azimuth),
                                                            std::cos(light.elevation) * std::sin(light.azimuth),
                                                            std::sin(light.elevation));
  const double floor_z = config_.tray_center.z();

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Eigen::Vector3d dir =
          rot * Eigen::Vector3d((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
      std::array<double, 3> base = kFloorColor;
      std::optional<Eigen::Vector3d> hit;
      if (dir.z() < 0) {
        for (const auto& box : boxes) {
          const double top = box.center.z() + box.half.z();
          const double t = (top - camera.position.z()) / dir.z();
          if (t <= 0) continue;
          const Eigen::Vector3d p = camera.position + t * dir;
          if (p.x() >= box.center.x() - box.half.x() && p.x() < box.center.x() + box.half.x() &&
              p.y() >= box.center.y() - box.half.y() && p.y() < box.center.y() + box.half.y()) {
            out.mask.at(u, v) = box.id;
            out.depth(v, u) = std::round(t * 1000.0) / 1000.0;
            base = {double(box.color[0]), double(box.color[1]), double(box.color[2])};
            hit = p;
            break;
          }
        }
        if (!hit) hit = camera.position + ((floor_z - camera.position.z()) / dir.z()) * dir;
      }
      const double f = hit ? shade(*hit, light_pos, light.intensity) : 0.35;
      for (int c = 0; c < 3; ++c) {
        out.rgb.at(u, v, c) = static_cast<float>(std::clamp(std::floor(base[c] * f + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

SettledScene settle_scene(const SceneSpec& spec, const SettlingProvider& backend) {
  if (spec.object_draws.empty()) return {};
  return backend.settle(spec);
}

SyntheticSample render_sample(const SettledScene& settled, const CameraModel& camera,
                              const LightSpec& light, const RenderProvider& backend) {
  RenderOutput r = backend.render(settled, camera, light);
  SyntheticSample s;
  s.cloud = point_cloud_from_depth(r.depth, camera);
  s.rgb = std::move(r.rgb);
  s.depth = std::move(r.depth);
  s.mask = std::move(r.mask);
  s.poses = settled.poses;
  s.camera = camera;
  s.light = light;
  return s;
}

SyntheticSample generate_sample(const SceneConfig& config, std::uint64_t index,
                                const SettlingProvider& settler, const RenderProvider& renderer,
                                SceneSpec* spec_out) {
  const std::uint64_t seed = sample_seed(config.seed, index);
  std::mt19937_64 rng(seed);
  SceneSpec spec = sample_scene(config, rng);
  spec.seed_used = seed;
  const SettledScene settled = settle_scene(spec, settler);
  SyntheticSample sample = render_sample(settled, config.camera(), spec.light, renderer);
  // Boxes hidden under others have no visible pixel; their poses would break
  // the mask/pose bijection, so they are dropped from the labels.
  const auto visible = sample.mask.instance_ids();
  std::erase_if(sample.poses, [&](const ObjectPose& p) { return !visible.count(p.object_id); });
  if (config.noise.gaussian_sigma > 0 || config.noise.salt_pepper_prob > 0) {
    sample.rgb = apply_noise(sample.rgb, config.noise, rng);
  }
  if (spec_out) *spec_out = std::move(spec);
  return sample;
}

void write_ply(const fs::path& path, const PointCloud& cloud) {
  std::ostringstream os;
  os << "ply\nformat ascii 1.0\nelement vertex " << cloud.cols()
     << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char buf[96];
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f\n", cloud(0, i), cloud(1, i), cloud(2, i));
    os << buf;
  }
  write_text(path, os.str());
}

void write_sample(const fs::path& dir, const SyntheticSample& sample, std::uint64_t seed) {
  fs::create_directories(dir);
  io::write_png(dir / "rgb.png", sample.rgb);
  io::write_mask_png(dir / "mask.png", sample.mask);
  io::write_depth_png(dir / "depth.png", sample.depth);
  write_ply(dir / "cloud.ply", sample.cloud);

  nlohmann::json poses = nlohmann::json::array();
  for (const auto& p : sample.poses) {
    poses.push_back({{"object_id", p.object_id},
                     {"asset_ref", p.asset_ref},
                     {"position", vec_json(p.position)},
                     {"quaternion", quat_json(p.orientation)}});
  }
  write_text(dir / "poses.json", poses.dump(2) + "\n");

  const auto& c = sample.camera;
  nlohmann::json meta = {
      {"camera",
       {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width},
        {"height", c.height}, {"position", vec_json(c.position)},
        {"quaternion", quat_json(c.orientation)}}},
      {"light",
       {{"azimuth", sample.light.azimuth}, {"elevation", sample.light.elevation},
        {"intensity", sample.light.intensity}}},
      {"seed", seed}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

DatasetManifest generate_dataset(const SceneConfig& config, std::size_t count,
                                 const fs::path& out_dir, int workers) {
  return generate_dataset(config, count, out_dir, BoxStackingSettler(config),
                          FlatBoxRenderer(config), workers);
}

DatasetManifest generate_dataset(const SceneConfig& config, std::size_t count,
                                 const fs::path& out_dir, const SettlingProvider& settler,
                                 const RenderProvider& renderer, int workers) {
  if (auto bad = config.check(); !bad.empty()) throw Error(ErrorKind::kConfig, bad);
  const fs::path manifest_path = out_dir / "manifest.json";
  std::error_code ec;
  fs::create_directories(out_dir / "samples", ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  fs::remove(manifest_path, ec);

  struct Slot {
    std::optional<nlohmann::json> entry;
    std::optional<SkippedSample> skipped;
  };
  std::vector<Slot> slots(count);
  std::atomic<std::size_t> next{0};
  std::mutex fault_mutex;
  std::exception_ptr fault;

  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      {
        std::lock_guard lock(fault_mutex);
        if (fault) return;
      }
      const std::uint64_t seed = sample_seed(config.seed, i);
      try {
        SceneSpec spec;
        const SyntheticSample sample = generate_sample(config, i, settler, renderer, &spec);
        char name[16];
        std::snprintf(name, sizeof name, "%06zu", i);
        write_sample(out_dir / "samples" / name, sample, seed);
        nlohmann::json assets = nlohmann::json::array();
        for (const auto& d : spec.object_draws) assets.push_back(d.asset_ref);
        slots[i].entry = nlohmann::json{
            {"index", i},
            {"dir", std::string("samples/") + name},
            {"seed", seed},
            {"n_objects", spec.object_draws.size()},
            {"n_visible", sample.poses.size()},
            {"assets", assets},
            {"light",
             {{"azimuth", spec.light.azimuth}, {"elevation", spec.light.elevation},
              {"intensity", spec.light.intensity}}}};
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kSettling || e.kind() == ErrorKind::kRender) {
          slots[i].skipped = SkippedSample{i, seed, e.what()};
        } else {
          std::lock_guard lock(fault_mutex);
          if (!fault) fault = std::current_exception();
        }
      } catch (...) {
        std::lock_guard lock(fault_mutex);
        if (!fault) fault = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(count, 1))));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (fault) {
    fs::remove(manifest_path, ec);
    std::rethrow_exception(fault);
  }

  DatasetManifest manifest;
  manifest.path = manifest_path;
  nlohmann::json samples = nlohmann::json::array();
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& slot : slots) {
    if (slot.entry) {
      samples.push_back(*slot.entry);
      ++manifest.written;
    } else if (slot.skipped) {
      skipped.push_back({{"index", slot.skipped->index},
                         {"seed", slot.skipped->seed},
                         {"reason", slot.skipped->reason}});
      manifest.skipped.push_back(*slot.skipped);
    }
  }
  const nlohmann::json doc = {{"config", config::to_json(config)},
                              {"count", count},
                              {"samples", samples},
                              {"skipped", skipped}};
  const fs::path tmp = manifest_path.string() + ".tmp";
  write_text(tmp, doc.dump(2) + "\n");
  fs::rename(tmp, manifest_path);
  return manifest;
}

IngestReport ingest_real_images(const fs::path& in_dir, int width, int height) {
  if (!fs::is_directory(in_dir)) throw Error(ErrorKind::kIo, in_dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(in_dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  IngestReport report;
  report.dataset.tag = DomainTag::kReal;
  report.dataset.noise.label = "real";
  for (const auto& f : files) {
    try {
      ImageBuffer img = io::read_rgb(f);
      report.dataset.items.push_back(
          {f.filename().string(), imaging::resize_bilinear(img, width, height), std::nullopt});
    } catch (const Error& e) {
      report.skipped.push_back(f.filename().string() + ": " + e.what());
    }
  }
  if (report.dataset.items.empty()) report.warnings.push_back("no readable images in " + in_dir.string());
  return report;
}

DomainDataset load_synthetic_dataset(const fs::path& root) {
  const fs::path samples = root / "samples";
  if (!fs::is_directory(samples)) {
    throw Error(ErrorKind::kMissingArtifact, "no synthetic dataset at " + root.string());
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(samples))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  DomainDataset ds;
  ds.tag = DomainTag::kSynth;
  for (const auto& d : dirs) {
    ds.items.push_back({d.filename().string(), io::read_rgb(d / "rgb.png"), io::read_mask_png(d / "mask.png")});
  }
  return ds;
}

}  // namespace sim2seg::synthgen
