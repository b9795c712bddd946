#include <algorithm>
#include <random>

#include "doctest.h"
#include "sim2seg/core.hpp"

using namespace sim2seg;

namespace {

bool has_violation(const std::vector<Violation>& v, const std::string& name) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.name == name; });
}

CameraModel small_camera(int w, int h) {
  CameraModel cam;
  cam.width = w;
  cam.height = h;
  cam.fx = cam.fy = 10.0;
  cam.cx = (w - 1) / 2.0;
  cam.cy = (h - 1) / 2.0;
  return cam;
}

/// A 4x4 sample with two objects, consistent by construction.
SyntheticSample consistent_sample() {
  SyntheticSample s;
  s.camera = small_camera(4, 4);
  s.rgb = ImageBuffer(4, 4, 3, ValueDomain::kU8);
  s.mask = InstanceMask(4, 4);
  s.depth = DepthMap::Zero(4, 4);
  for (int x = 0; x < 2; ++x) {
    s.mask.at(x, 0) = 1;
    s.depth(0, x) = 0.5;
  }
  s.mask.at(3, 3) = 2;
  s.depth(3, 3) = 0.6;
  for (std::uint32_t id : {1u, 2u}) {
    ObjectPose p;
    p.object_id = id;
    p.asset_ref = "box:0.1x0.1x0.1";
    s.poses.push_back(p);
  }
  s.cloud = point_cloud_from_depth(s.depth, s.camera);
  return s;
}

}  // namespace

TEST_CASE("image buffer rejects data that breaks its invariants") {
  CHECK_THROWS_AS(ImageBuffer(2, 2, 1, ValueDomain::kU8, Eigen::ArrayXf::Zero(3)), Error);
  try {
    ImageBuffer(2, 2, 1, ValueDomain::kU8, Eigen::ArrayXf::Zero(3));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
  }
  Eigen::ArrayXf frac = Eigen::ArrayXf::Zero(4);
  frac[2] = 1.5f;
  CHECK_THROWS(ImageBuffer(2, 2, 1, ValueDomain::kU8, frac));
  Eigen::ArrayXf wide = Eigen::ArrayXf::Zero(4);
  wide[0] = -1.2f;
  try {
    ImageBuffer(2, 2, 1, ValueDomain::kNorm, wide);
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDomain);
  }
  CHECK_THROWS(ImageBuffer(2, 2, 2, ValueDomain::kU8));
  CHECK(ImageBuffer(3, 2, 3, ValueDomain::kU8).data().size() == 18);
}

TEST_CASE("instance mask ids and background") {
  InstanceMask m(3, 2, {0, 4, 4, 0, 9, 1});
  CHECK(m.instance_ids() == std::set<InstanceMask::Id>{1, 4, 9});
  CHECK_THROWS(InstanceMask(3, 2, {0, 1}));
}

TEST_CASE("validate_sample") {
  SUBCASE("consistent sample is ok") { CHECK(validate_sample(consistent_sample()).empty()); }
  SUBCASE("orphan mask id") {
    auto s = consistent_sample();
    s.mask.at(2, 2) = 7;
    CHECK(has_violation(validate_sample(s), "orphan mask id"));
  }
  SUBCASE("orphan pose") {
    auto s = consistent_sample();
    ObjectPose p;
    p.object_id = 5;
    s.poses.push_back(p);
    CHECK(has_violation(validate_sample(s), "orphan pose"));
  }
  SUBCASE("raster size mismatch") {
    auto s = consistent_sample();
    s.rgb = ImageBuffer(256, 256, 3, ValueDomain::kU8);
    s.mask = InstanceMask(128, 128);
    CHECK(has_violation(validate_sample(s), "raster size mismatch"));
  }
  SUBCASE("negative depth") {
    auto s = consistent_sample();
    s.depth(1, 1) = -0.1;
    CHECK(has_violation(validate_sample(s), "negative depth"));
  }
  SUBCASE("non-unit quaternion") {
    auto s = consistent_sample();
    s.poses[0].orientation = Eigen::Quaterniond(2, 0, 0, 0);
    CHECK(has_violation(validate_sample(s), "non-unit quaternion"));
  }
  SUBCASE("every violation is reported") {
    auto s = consistent_sample();
    s.mask.at(2, 2) = 7;
    s.depth(1, 1) = -0.1;
    const auto v = validate_sample(s);
    CHECK(has_violation(v, "orphan mask id"));
    CHECK(has_violation(v, "negative depth"));
  }
}

TEST_CASE("point_cloud_from_depth") {
  const auto cam = small_camera(5, 5);  // principal point at pixel (2, 2)
  SUBCASE("principal ray") {
    DepthMap d = DepthMap::Zero(5, 5);
    d(2, 2) = 1.0;
    const auto cloud = point_cloud_from_depth(d, cam);
    REQUIRE(cloud.cols() == 1);
    CHECK(cloud.col(0).isApprox(Eigen::Vector3d(0, 0, 1)));
  }
  SUBCASE("zero depth gives an empty cloud") {
    CHECK(point_cloud_from_depth(DepthMap::Zero(5, 5), cam).cols() == 0);
  }
  SUBCASE("off-axis pixel") {
    DepthMap d = DepthMap::Zero(5, 5);
    d(0, 4) = 2.0;  // u = 4, v = 0
    const auto c = point_cloud_from_depth(d, cam);
    CHECK(c(0, 0) == doctest::Approx(2.0 * (4 - 2) / 10.0));
    CHECK(c(1, 0) == doctest::Approx(2.0 * (0 - 2) / 10.0));
    CHECK(c(2, 0) == doctest::Approx(2.0));
  }
  SUBCASE("size mismatch is a dimension error") {
    try {
      point_cloud_from_depth(DepthMap::Zero(4, 5), cam);
      FAIL("expected a dimension error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDimension);
    }
  }
}

TEST_CASE("depth -> cloud -> depth round trip on random maps") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> depth(0.2, 3.0), coin(0, 1);
  std::uniform_int_distribution<int> size(3, 24);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = size(rng), h = size(rng);
    auto cam = small_camera(w, h);
    cam.fx = 5 + 50 * coin(rng);
    cam.fy = 5 + 50 * coin(rng);
    DepthMap d(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) d(y, x) = coin(rng) < 0.3 ? 0.0 : depth(rng);
    const auto back = project_cloud(point_cloud_from_depth(d, cam), cam);
    REQUIRE((back - d).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("camera invariants and the downward-looking camera") {
  CameraModel bad;
  bad.fx = 0;
  CHECK_FALSE(bad.check_invariants().empty());
  CameraModel skew;
  skew.orientation = Eigen::Quaterniond(1, 1, 0, 0);
  CHECK_FALSE(skew.check_invariants().empty());

  const Eigen::Vector3d target(0.1, -0.2, 0.0);
  const auto cam = CameraModel::looking_down(target, 0.7, 64, 48, 0.7);
  CHECK(cam.check_invariants().empty());
  CHECK(cam.position.isApprox(target + Eigen::Vector3d(0, 0, 0.7)));
  // The optical axis points down and image +x follows world +x.
  CHECK((cam.orientation * Eigen::Vector3d::UnitZ()).isApprox(-Eigen::Vector3d::UnitZ()));
  CHECK((cam.orientation * Eigen::Vector3d::UnitX()).isApprox(Eigen::Vector3d::UnitX()));
  CHECK(cam.cx == doctest::Approx(31.5));
  CHECK(cam.fx == doctest::Approx(32.0 / std::tan(0.35)));
}

TEST_CASE("noise profile") {
  NoiseProfile n;
  CHECK(n.check_invariants().empty());
  n.gaussian_sigma = -1;
  CHECK_FALSE(n.check_invariants().empty());
  n.gaussian_sigma = 0;
  n.salt_pepper_prob = 1.5;
  CHECK_FALSE(n.check_invariants().empty());

  std::mt19937_64 rng(1);
  ImageBuffer img(8, 8, 3, ValueDomain::kU8);
  img.data().setConstant(100);
  NoiseProfile clean;
  CHECK(apply_noise(img, clean, rng) == img);

  NoiseProfile noisy;
  noisy.gaussian_sigma = 20;
  noisy.salt_pepper_prob = 0.1;
  const auto out = apply_noise(img, noisy, rng);
  CHECK(out.check_invariants().empty());
  CHECK_FALSE(out == img);
  CHECK_THROWS(apply_noise(ImageBuffer(2, 2, 1, ValueDomain::kNorm), noisy, rng));
}

TEST_CASE("domain dataset requires masks on synthetic items") {
  DomainDataset d;
  d.tag = DomainTag::kSynth;
  d.items.push_back({"a", ImageBuffer(2, 2, 3, ValueDomain::kU8), std::nullopt});
  CHECK_THROWS_AS(d.check(), Error);
  d.tag = DomainTag::kReal;
  CHECK_NOTHROW(d.check());
}
