#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sim2seg/error.hpp"

namespace sim2seg {

enum class ValueDomain { kU8, kNorm };

/// H×W×C raster, row-major and channel-interleaved. U8 images hold integral
/// values in [0,255]; NORM images hold values in [-1,1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, ValueDomain domain);
  /// Throws kShape/kDomain if `data` breaks the invariants.
  ImageBuffer(int width, int height, int channels, ValueDomain domain,
              Eigen::ArrayXf data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  ValueDomain domain() const { return domain_; }
  bool empty() const { return data_.size() == 0; }

  float& at(int x, int y, int c = 0) {
    return data_[(static_cast<Eigen::Index>(y) * width_ + x) * channels_ + c];
  }
  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<Eigen::Index>(y) * width_ + x) * channels_ + c];
  }

  const Eigen::ArrayXf& data() const { return data_; }
  Eigen::ArrayXf& data() { return data_; }

  /// Empty string when the invariants hold, otherwise the first violation.
  std::string check_invariants() const;

  friend bool operator==(const ImageBuffer& a, const ImageBuffer& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           a.channels_ == b.channels_ && a.domain_ == b.domain_ &&
           (a.data_ == b.data_).all();
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  ValueDomain domain_ = ValueDomain::kU8;
  Eigen::ArrayXf data_;
};

/// Integer id raster; 0 is background.
class InstanceMask {
 public:
  using Id = std::uint32_t;

  InstanceMask() = default;
  InstanceMask(int width, int height) : width_(width), height_(height), ids_(
      static_cast<std::size_t>(width) * height, 0) {}
  InstanceMask(int width, int height, std::vector<Id> ids);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return ids_.size(); }

  Id& at(int x, int y) { return ids_[static_cast<std::size_t>(y) * width_ + x]; }
  Id at(int x, int y) const { return ids_[static_cast<std::size_t>(y) * width_ + x]; }
  Id& operator[](std::size_t i) { return ids_[i]; }
  Id operator[](std::size_t i) const { return ids_[i]; }

  const std::vector<Id>& ids() const { return ids_; }

  /// Sorted set of non-zero ids.
  std::set<Id> instance_ids() const;

  friend bool operator==(const InstanceMask&, const InstanceMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Id> ids_;
};

/// Depth raster in meters, rows = image height. Zero means "no hit".
using DepthMap = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Points as columns, meters.
using PointCloud = Eigen::Matrix3Xd;

/// Pinhole camera. The camera frame has +z along the optical axis, +x right
/// and +y down. `orientation` rotates camera-frame vectors into the world.
struct CameraModel {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 127.5;
  double cy = 127.5;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  int width = 256;
  int height = 256;

  std::string check_invariants() const;

  /// Camera looking straight down from `height_m` above `target`, with image
  /// +x along world +x. `fov_x` is the horizontal field of view in radians.
  static CameraModel looking_down(const Eigen::Vector3d& target, double height_m,
                                  int width, int height, double fov_x);
};

struct NoiseProfile {
  std::string label = "sim-clean";
  double gaussian_sigma = 0.0;
  double salt_pepper_prob = 0.0;

  std::string check_invariants() const;
};

/// Applies additive Gaussian noise then salt-and-pepper to a U8 image.
ImageBuffer apply_noise(const ImageBuffer& image, const NoiseProfile& noise,
                        std::mt19937_64& rng);

struct ObjectPose {
  std::uint32_t object_id = 1;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  std::string asset_ref;
};

struct LightSpec {
  double azimuth = 0.0;    // radians
  double elevation = 1.0;  // radians above the tray plane
  double intensity = 1.0;
};

struct SyntheticSample {
  ImageBuffer rgb;
  DepthMap depth;
  InstanceMask mask;
  PointCloud cloud;
  std::vector<ObjectPose> poses;
  CameraModel camera;
  LightSpec light;
};

struct Violation {
  std::string name;
  std::string detail;
};

/// Every violated SyntheticSample invariant, by name. Empty means ok.
std::vector<Violation> validate_sample(const SyntheticSample& sample);

enum class DomainTag { kReal, kSynth, kTranslated };

struct DomainItem {
  std::string ref;
  ImageBuffer image;
  std::optional<InstanceMask> mask;
};

struct DomainDataset {
  DomainTag tag = DomainTag::kReal;
  std::vector<DomainItem> items;
  NoiseProfile noise;
  std::optional<CameraModel> camera;

  /// Throws kData when a SYNTH item lacks a mask.
  void check() const;
};

inline bool is_unit(const Eigen::Quaterniond& q, double tol = 1e-6) {
  return std::abs(q.norm() - 1.0) <= tol;
}

/// Pinhole back-projection of one pixel.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> back_project(const CameraModel& cam, Scalar u, Scalar v,
                                         Scalar depth) {
  return {depth * (u - Scalar(cam.cx)) / Scalar(cam.fx),
          depth * (v - Scalar(cam.cy)) / Scalar(cam.fy), depth};
}

/// Camera-frame cloud of every pixel with positive depth, in raster order.
PointCloud point_cloud_from_depth(const DepthMap& depth, const CameraModel& camera);

/// Rasterizes camera-frame points (z > 0) to the nearest pixel; the closest
/// point wins when several land on one pixel.
DepthMap project_cloud(const PointCloud& cloud, const CameraModel& camera);

}  // namespace sim2seg
