#include <map>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "sim2seg/postproc.hpp"

using namespace sim2seg;
using namespace sim2seg::postproc;

namespace {

BinaryMap random_map(int w, int h, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  BinaryMap b{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h)};
  for (auto& v : b.fg) v = coin(rng);
  return b;
}

ImageBuffer as_image(const BinaryMap& b) {
  ImageBuffer img(b.width, b.height, 1, ValueDomain::kU8);
  for (int y = 0; y < b.height; ++y)
    for (int x = 0; x < b.width; ++x) img.at(x, y) = b.at(x, y) ? 255.f : 0.f;
  return img;
}

// Brute force over every background pixel, plus the frame just outside the image.
double brute_sq_distance(const BinaryMap& b, int x, int y) {
  if (!b.at(x, y)) return 0;
  double best = 1e18;
  for (int v = -1; v <= b.height; ++v) {
    for (int u = -1; u <= b.width; ++u) {
      const bool outside = u < 0 || v < 0 || u >= b.width || v >= b.height;
      if (!outside && b.at(u, v)) continue;
      best = std::min(best, static_cast<double>((u - x) * (u - x) + (v - y) * (v - y)));
    }
  }
  return best;
}

std::map<std::uint32_t, std::size_t> areas(const InstanceMask& m) {
  std::map<std::uint32_t, std::size_t> a;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) ++a[m[i]];
  return a;
}

// Ids are 1..K and first appear in raster order.
bool canonical(const InstanceMask& m) {
  std::uint32_t next = 1;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] == 0 || m[i] < next) continue;
    if (m[i] != next) return false;
    ++next;
  }
  return true;
}

}  // namespace

TEST_CASE("binarize") {
  ImageBuffer img(4, 1, 1, ValueDomain::kU8);
  img.data() << 0, 31, 32, 255;
  const auto b = binarize(img, 32);
  CHECK(b.fg == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(binarize(img, 0).fg == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK_THROWS(binarize(ImageBuffer(2, 2, 3, ValueDomain::kU8), 10));
}

TEST_CASE("squared distance transform matches brute force") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(1, 14);
  for (int trial = 0; trial < 60; ++trial) {
    const auto b = random_map(size(rng), size(rng), trial % 2 ? 0.8 : 0.5, rng);
    const auto d = squared_distance_transform(b);
    REQUIRE(d.rows() == b.height);
    REQUIRE(d.cols() == b.width);
    for (int y = 0; y < b.height; ++y)
      for (int x = 0; x < b.width; ++x) REQUIRE(d(y, x) == brute_sq_distance(b, x, y));
  }
  // All foreground: the image border is the nearest background.
  BinaryMap full{5, 5, std::vector<std::uint8_t>(25, 1)};
  CHECK(squared_distance_transform(full)(2, 2) == 9);
  CHECK(squared_distance_transform(full)(0, 0) == 1);
}

TEST_CASE("connected components match flood fill") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = random_map(16, 16, 0.55, rng);
    REQUIRE(connected_components(b) == oracle::flood_fill(b.fg, 16, 16));
  }
  BinaryMap checker{6, 6, std::vector<std::uint8_t>(36)};
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) checker.fg[y * 6 + x] = (x + y) % 2;
  CHECK(connected_components(checker).instance_ids().size() == 18);  // no diagonal links
  BinaryMap full{7, 3, std::vector<std::uint8_t>(21, 1)};
  CHECK(connected_components(full).instance_ids().size() == 1);
}

TEST_CASE("a single convex blob stays one instance") {
  const auto disc = oracle::two_discs(40, 40, 20, 20, 20, 20, 12);
  const auto m = watershed_instances(disc, PostprocSpec{});
  CHECK(m.instance_ids() == std::set<InstanceMask::Id>{1});
}

TEST_CASE("well separated blobs match connected components") {
  std::mt19937_64 rng(3);
  PostprocSpec spec;
  spec.min_instance_area = 0;
  spec.marker_min_distance = 3;
  for (int trial = 0; trial < 30; ++trial) {
    // Disjoint rectangles on a grid of cells, each at least two pixels apart.
    BinaryMap b{48, 48, std::vector<std::uint8_t>(48 * 48)};
    std::uniform_int_distribution<int> side(2, 10), coin(0, 1);
    for (int cy = 0; cy < 4; ++cy) {
      for (int cx = 0; cx < 4; ++cx) {
        if (!coin(rng)) continue;
        const int w = side(rng), h = side(rng);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) b.fg[(cy * 12 + y) * 48 + cx * 12 + x] = 1;
      }
    }
    REQUIRE(watershed_instances(b, spec) == oracle::flood_fill(b.fg, 48, 48));
  }
}

TEST_CASE("touching discs split along the bisector") {
  const auto discs = oracle::two_discs(64, 64, 22, 32, 42, 32, 13);
  const auto m = watershed_instances(discs, PostprocSpec{});
  CHECK(m.instance_ids().size() == 2);
  CHECK(oracle::nearest_center_agreement(m, discs, 22, 32, 42, 32) >= 0.95);
}

TEST_CASE("watershed properties on random maps") {
  std::mt19937_64 rng(4);
  PostprocSpec spec;
  spec.marker_min_distance = 2;
  spec.min_instance_area = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = random_map(24, 20, 0.7, rng);
    const auto m = watershed_instances(b, spec);
    for (std::size_t i = 0; i < b.fg.size(); ++i) REQUIRE((m[i] != 0) == (b.fg[i] != 0));
    REQUIRE(canonical(m));
    // Every instance lies inside one connected component.
    const auto cc = oracle::flood_fill(b.fg, 24, 20);
    std::map<std::uint32_t, std::uint32_t> owner;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!m[i]) continue;
      const auto [it, fresh] = owner.emplace(m[i], cc[i]);
      REQUIRE((fresh || it->second == cc[i]));
    }
  }
}

TEST_CASE("area filter drops small instances and relabels") {
  InstanceMask m(5, 2, {7, 7, 0, 3, 0,
                        7, 7, 0, 0, 9});
  const auto f = filter_and_relabel(m, 2);
  CHECK(f == InstanceMask(5, 2, {1, 1, 0, 0, 0, 1, 1, 0, 0, 0}));
  CHECK(filter_and_relabel(m, 0) == InstanceMask(5, 2, {1, 1, 0, 2, 0, 1, 1, 0, 0, 3}));

  std::mt19937_64 rng(5);
  PostprocSpec spec;
  spec.min_instance_area = 6;
  for (int trial = 0; trial < 20; ++trial) {
    const auto img = as_image(random_map(20, 20, 0.6, rng));
    for (auto mode : {Mode::kWatershed, Mode::kConnectedComponents}) {
      spec.mode = mode;
      const auto out = extract_instances(img, spec);
      for (const auto& [id, area] : areas(out)) REQUIRE(area >= 6);
      REQUIRE(canonical(out));
    }
  }
}

TEST_CASE("spec validation") {
  PostprocSpec s;
  CHECK(s.check().empty());
  s.binarize_threshold = 300;
  CHECK_FALSE(s.check().empty());
  s = PostprocSpec{};
  s.marker_min_distance = 0;
  CHECK_FALSE(s.check().empty());
  s = PostprocSpec{};
  s.min_instance_area = -1;
  CHECK_FALSE(s.check().empty());
  s.min_instance_area = 0;
  CHECK(s.check().empty());
}
