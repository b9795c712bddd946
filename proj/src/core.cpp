#include "sim2seg/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace sim2seg {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kData: return "data";
    case ErrorKind::kMissingArtifact: return "missing artifact";
    case ErrorKind::kTrainingFault: return "training fault";
    case ErrorKind::kSettling: return "settling";
    case ErrorKind::kRender: return "render";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

ImageBuffer::ImageBuffer(int width, int height, int channels, ValueDomain domain)
    : ImageBuffer(width, height, channels, domain,
                  Eigen::ArrayXf::Zero(static_cast<Eigen::Index>(width) * height *
                                       channels)) {}

ImageBuffer::ImageBuffer(int width, int height, int channels, ValueDomain domain,
                         Eigen::ArrayXf data)
    : width_(width), height_(height), channels_(channels), domain_(domain),
      data_(std::move(data)) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    throw Error(ErrorKind::kShape, "image must have non-negative size and 1 or 3 channels");
  }
  const std::string bad = check_invariants();
  if (!bad.empty()) {
    throw Error(bad.find("length") != std::string::npos ? ErrorKind::kShape
                                                        : ErrorKind::kDomain,
                bad);
  }
}

std::string ImageBuffer::check_invariants() const {
  if (data_.size() != static_cast<Eigen::Index>(width_) * height_ * channels_) {
    return "data length does not equal width*height*channels";
  }
  if (domain_ == ValueDomain::kU8) {
    for (Eigen::Index i = 0; i < data_.size(); ++i) {
      const float v = data_[i];
      if (!(v >= 0.f && v <= 255.f) || v != std::floor(v)) {
        return "U8 sample " + std::to_string(i) + " is not an integer in [0,255]";
      }
    }
  } else {
    for (Eigen::Index i = 0; i < data_.size(); ++i) {
      const float v = data_[i];
      if (!(v >= -1.f - 1e-6f && v <= 1.f + 1e-6f)) {
        return "NORM sample " + std::to_string(i) + " is outside [-1,1]";
      }
    }
  }
  return {};
}

InstanceMask::InstanceMask(int width, int height, std::vector<Id> ids)
    : width_(width), height_(height), ids_(std::move(ids)) {
  if (ids_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorKind::kShape, "mask ids length does not equal width*height");
  }
}

std::set<InstanceMask::Id> InstanceMask::instance_ids() const {
  std::set<Id> out;
  for (Id id : ids_) {
    if (id != 0) out.insert(id);
  }
  return out;
}

std::string CameraModel::check_invariants() const {
  if (!(fx > 0) || !(fy > 0)) return "focal lengths must be positive";
  if (!is_unit(orientation)) return "camera orientation is not a unit quaternion";
  if (width <= 0 || height <= 0) return "image size must be positive";
  return {};
}

CameraModel CameraModel::looking_down(const Eigen::Vector3d& target, double height_m,
                                      int width, int height, double fov_x) {
  CameraModel cam;
  cam.width = width;
  cam.height = height;
  cam.fx = 0.5 * width / std::tan(0.5 * fov_x);
  cam.fy = cam.fx;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.position = target + Eigen::Vector3d(0, 0, height_m);
  // Half turn about x: camera +z -> world -z, camera +y -> world -y.
  cam.orientation = Eigen::Quaterniond(0.0, 1.0, 0.0, 0.0);
  return cam;
}

std::string NoiseProfile::check_invariants() const {
  if (!(gaussian_sigma >= 0)) return "gaussian_sigma must be >= 0";
  if (!(salt_pepper_prob >= 0 && salt_pepper_prob <= 1)) {
    return "salt_pepper_prob must lie in [0,1]";
  }
  return {};
}

ImageBuffer apply_noise(const ImageBuffer& image, const NoiseProfile& noise,
                        std::mt19937_64& rng) {
  if (image.domain() != ValueDomain::kU8) {
    throw Error(ErrorKind::kDomain, "apply_noise expects a U8 image");
  }
  ImageBuffer out = image;
  std::normal_distribution<double> gauss(0.0, noise.gaussian_sigma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto& d = out.data();
  if (noise.gaussian_sigma > 0) {
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      d[i] = static_cast<float>(std::clamp(std::round(d[i] + gauss(rng)), 0.0, 255.0));
    }
  }
  if (noise.salt_pepper_prob > 0) {
    const int c = out.channels();
    for (Eigen::Index p = 0; p < d.size() / c; ++p) {
      if (unit(rng) < noise.salt_pepper_prob) {
        const float v = unit(rng) < 0.5 ? 0.f : 255.f;
        for (int k = 0; k < c; ++k) d[p * c + k] = v;
      }
    }
  }
  return out;
}

std::vector<Violation> validate_sample(const SyntheticSample& s) {
  std::vector<Violation> out;
  auto add = [&](std::string name, std::string detail) {
    out.push_back({std::move(name), std::move(detail)});
  };

  if (s.rgb.channels() != 3) add("rgb channel count", "rgb must have 3 channels");
  if (const auto bad = s.rgb.check_invariants(); !bad.empty()) add("rgb invariant", bad);

  const int w = s.rgb.width();
  const int h = s.rgb.height();
  std::ostringstream sizes;
  sizes << "rgb " << w << "x" << h << ", mask " << s.mask.width() << "x" << s.mask.height()
        << ", depth " << s.depth.cols() << "x" << s.depth.rows();
  if (s.mask.width() != w || s.mask.height() != h || s.depth.cols() != w ||
      s.depth.rows() != h) {
    add("raster size mismatch", sizes.str());
  }
  if (s.camera.width != w || s.camera.height != h) {
    add("camera size mismatch", "camera image_size differs from rasters");
  }
  if (s.depth.size() > 0 && !(s.depth >= 0.0).all()) {
    add("negative depth", "depth values must be >= 0");
  }
  if (const auto bad = s.camera.check_invariants(); !bad.empty()) add("camera invariant", bad);

  std::map<std::uint32_t, int> pose_ids;
  for (const auto& p : s.poses) {
    if (p.object_id < 1) add("invalid object id", "object_id must be >= 1");
    if (!is_unit(p.orientation)) {
      add("non-unit quaternion", "pose " + std::to_string(p.object_id));
    }
    if (++pose_ids[p.object_id] > 1) {
      add("duplicate pose id", "object_id " + std::to_string(p.object_id));
    }
  }
  const auto mask_ids = s.mask.instance_ids();
  for (auto id : mask_ids) {
    if (!pose_ids.count(id)) add("orphan mask id", "mask id " + std::to_string(id));
  }
  for (const auto& [id, n] : pose_ids) {
    if (id != 0 && !mask_ids.count(id)) {
      add("orphan pose", "pose " + std::to_string(id) + " has no mask pixels");
    }
  }
  return out;
}

void DomainDataset::check() const {
  if (tag != DomainTag::kSynth) return;
  for (const auto& item : items) {
    if (!item.mask) throw Error(ErrorKind::kData, "SYNTH item '" + item.ref + "' has no mask");
  }
}

PointCloud point_cloud_from_depth(const DepthMap& depth, const CameraModel& camera) {
  if (depth.cols() != camera.width || depth.rows() != camera.height) {
    throw Error(ErrorKind::kDimension, "depth raster does not match camera image size");
  }
  const Eigen::Index n = (depth > 0.0).count();
  PointCloud cloud(3, n);
  Eigen::Index k = 0;
  for (Eigen::Index v = 0; v < depth.rows(); ++v) {
    for (Eigen::Index u = 0; u < depth.cols(); ++u) {
      const double d = depth(v, u);
      if (d > 0.0) {
        cloud.col(k++) = back_project<double>(camera, static_cast<double>(u),
                                              static_cast<double>(v), d);
      }
    }
  }
  return cloud;
}

DepthMap project_cloud(const PointCloud& cloud, const CameraModel& camera) {
  DepthMap depth = DepthMap::Zero(camera.height, camera.width);
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
    const double z = cloud(2, i);
    if (!(z > 0.0)) continue;
    const long u = std::lround(camera.fx * cloud(0, i) / z + camera.cx);
    const long v = std::lround(camera.fy * cloud(1, i) / z + camera.cy);
    if (u < 0 || v < 0 || u >= camera.width || v >= camera.height) continue;
    double& cell = depth(v, u);
    if (cell == 0.0 || z < cell) cell = z;
  }
  return depth;
}

}  // namespace sim2seg
