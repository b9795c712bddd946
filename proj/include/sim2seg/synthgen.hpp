#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sim2seg/core.hpp"

namespace sim2seg::synthgen {

struct LightRandomization {
  double azimuth_min = 0.0;
  double azimuth_max = 6.283185307179586;
  double elevation_min = 0.5;
  double elevation_max = 1.4;
  double intensity_min = 0.7;
  double intensity_max = 1.0;

  std::string check() const;
};

struct SceneConfig {
  Eigen::Vector3d tray_center = Eigen::Vector3d::Zero();  // floor centre, floor at z = tray_center.z
  Eigen::Vector2d tray_inner_size{0.4, 0.4};
  Eigen::Vector3d spawn_box{0.4, 0.4, 0.45};
  double spawn_offset_z = 0.05;  // gap between the floor and the bottom of the spawn box
  double camera_height = 0.7;
  double camera_fov = 0.6981317007977318;  // horizontal, radians (40 degrees)
  std::vector<int> n_objects_choices{7, 8, 9, 10, 11};
  std::vector<std::string> asset_pool = default_asset_pool();
  LightRandomization light;
  int image_size = 256;
  NoiseProfile noise;
  std::uint64_t seed = 0;

  /// Empty when valid, otherwise the first problem, naming the field.
  std::string check() const;
  CameraModel camera() const;

  /// Sixteen boxes of distinct size and color.
  static std::vector<std::string> default_asset_pool();
};

struct ObjectDraw {
  std::string asset_ref;
  Eigen::Vector3d position;
  Eigen::Quaterniond orientation;
};

struct SceneSpec {
  std::vector<ObjectDraw> object_draws;
  LightSpec light;
  std::uint64_t seed_used = 0;
};

struct SettledScene {
  std::vector<ObjectPose> poses;
  std::vector<bool> contact_ok;
};

/// Box primitive described by an asset ref of the form "box:LxWxH" (full
/// extents in meters, e.g. "box:0.08x0.05x0.03").
struct BoxAsset {
  Eigen::Vector3d half_extents;
  std::array<std::uint8_t, 3> color;
};

/// Throws kConfig for refs that are not box primitives.
BoxAsset parse_box_asset(const std::string& ref);

/// Half extents of the world-axis-aligned bounding box of a rotated box.
Eigen::Vector3d world_half_extents(const BoxAsset& asset, const Eigen::Quaterniond& q);

/// Nearest of the 24 rotations that map coordinate axes onto coordinate axes.
Eigen::Quaterniond snap_to_axis_rotation(const Eigen::Quaterniond& q);

/// Physics backend. Implementations must be reentrant or used per worker.
class SettlingProvider {
 public:
  virtual ~SettlingProvider() = default;
  /// Throws kSettling when objects fail to come to rest.
  virtual SettledScene settle(const SceneSpec& spec) const = 0;
};

struct RenderOutput {
  ImageBuffer rgb;
  DepthMap depth;
  InstanceMask mask;
};

/// Rendering backend; same reentrancy contract as SettlingProvider.
class RenderProvider {
 public:
  virtual ~RenderProvider() = default;
  /// Throws kRender on failure.
  virtual RenderOutput render(const SettledScene& scene, const CameraModel& camera,
                              const LightSpec& light) const = 0;
};

/// Deterministic fallback: spawn orientations snap to the nearest axis-aligned
/// rotation, then boxes drop in ascending spawn height onto the floor or the
/// highest settled box whose footprint overlaps theirs.
class BoxStackingSettler : public SettlingProvider {
 public:
  explicit BoxStackingSettler(SceneConfig config) : config_(std::move(config)) {}
  SettledScene settle(const SceneSpec& spec) const override;

 private:
  SceneConfig config_;
};

/// Deterministic fallback: ray-casts top faces of the settled boxes with flat
/// per-object colors shaded by the point light. Depth is quantized to 1 mm.
class FlatBoxRenderer : public RenderProvider {
 public:
  explicit FlatBoxRenderer(SceneConfig config) : config_(std::move(config)) {}
  RenderOutput render(const SettledScene& scene, const CameraModel& camera,
                      const LightSpec& light) const override;

 private:
  SceneConfig config_;
};

/// Uniform double in [0,1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng);
/// Uniform integer in [0, n).
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);
/// Uniform rotation (Shoemake).
Eigen::Quaterniond uniform_quaternion(std::mt19937_64& rng);
/// Seed of the independent stream for one sample.
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index);

/// Throws kConfig when the config is invalid or the pool is smaller than n.
SceneSpec sample_scene(const SceneConfig& config, std::mt19937_64& rng);

SettledScene settle_scene(const SceneSpec& spec, const SettlingProvider& backend);

SyntheticSample render_sample(const SettledScene& settled, const CameraModel& camera,
                              const LightSpec& light, const RenderProvider& backend);

struct SkippedSample {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  std::string reason;
};

struct DatasetManifest {
  std::filesystem::path path;  // manifest.json
  std::size_t written = 0;
  std::vector<SkippedSample> skipped;
};

/// Full pipeline for one sample index: sample, settle, render, add noise.
SyntheticSample generate_sample(const SceneConfig& config, std::uint64_t index,
                                const SettlingProvider& settler, const RenderProvider& renderer,
                                SceneSpec* spec_out = nullptr);

/// Writes `count` samples under out_dir/samples/NNNNNN and out_dir/manifest.json.
/// Samples are generated by `workers` threads; output does not depend on it.
DatasetManifest generate_dataset(const SceneConfig& config, std::size_t count,
                                 const std::filesystem::path& out_dir, int workers = 1);
DatasetManifest generate_dataset(const SceneConfig& config, std::size_t count,
                                 const std::filesystem::path& out_dir,
                                 const SettlingProvider& settler, const RenderProvider& renderer,
                                 int workers = 1);

void write_sample(const std::filesystem::path& dir, const SyntheticSample& sample,
                  std::uint64_t seed);

struct IngestReport {
  DomainDataset dataset;
  std::vector<std::string> skipped;  // "file: reason"
  std::vector<std::string> warnings;
};

/// Every regular file in `in_dir`, ordered by filename, read as RGB and resized
/// bilinearly. Unreadable files are reported and skipped.
IngestReport ingest_real_images(const std::filesystem::path& in_dir, int width = 256,
                                int height = 256);

/// Loads rgb.png + mask.png pairs of a generated dataset as a SYNTH dataset.
DomainDataset load_synthetic_dataset(const std::filesystem::path& root);

/// PLY (ASCII) writer for point clouds.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace sim2seg::synthgen
