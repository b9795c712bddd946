#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sim2seg/core.hpp"

namespace sim2seg::postproc {

enum class Mode { kWatershed, kConnectedComponents };

struct PostprocSpec {
  int binarize_threshold = 32;
  int marker_min_distance = 9;
  int min_instance_area = 50;
  Mode mode = Mode::kWatershed;

  std::string check() const;
};

/// Row-major foreground flags.
struct BinaryMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> fg;

  bool at(int x, int y) const { return fg[static_cast<std::size_t>(y) * width + x] != 0; }
};

/// pixel >= threshold is foreground.
BinaryMap binarize(const ImageBuffer& gray, int threshold);

/// Squared Euclidean distance from each pixel to the nearest background
/// pixel (exact, separable lower-envelope transform). Pixels outside the
/// image count as background.
Eigen::ArrayXXd squared_distance_transform(const BinaryMap& binary);

/// 4-connected labeling, ids 1..K in raster order of each component's first pixel.
InstanceMask connected_components(const BinaryMap& binary);

/// Distance-transform markers flooded over the foreground; see PostprocSpec.
InstanceMask watershed_instances(const BinaryMap& binary, const PostprocSpec& spec);
InstanceMask watershed_instances(const ImageBuffer& gray, const PostprocSpec& spec);

/// Drops instances smaller than `min_area` and relabels 1..K in raster order.
InstanceMask filter_and_relabel(const InstanceMask& mask, int min_area);

/// Binarize then segment according to `spec.mode`.
InstanceMask extract_instances(const ImageBuffer& gray, const PostprocSpec& spec);

}  // namespace sim2seg::postproc
