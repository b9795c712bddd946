#pragma once

#include <string>
#include <vector>

#include "sim2seg/core.hpp"

namespace sim2seg::imaging {

enum class SobelMagnitude { kEuclidean, kAbsSum };

/// Which preprocessed channels feed the segmentation generator.
enum class InputMode { kSobel, kGray, kGraySobel };

struct PreprocessSpec {
  bool grayscale = true;
  bool sobel = true;
  SobelMagnitude magnitude = SobelMagnitude::kEuclidean;

  /// Empty when valid for the given generator input mode.
  std::string check(InputMode mode = InputMode::kSobel) const;
  int input_channels(InputMode mode) const {
    if (!grayscale) return 3;
    return mode == InputMode::kGraySobel ? 2 : 1;
  }
};

/// BT.601 luma, rounded half up: round(0.299 R + 0.587 G + 0.114 B).
ImageBuffer to_grayscale(const ImageBuffer& rgb);

/// 3x3 Sobel gradient magnitude with replicate-padded borders, rounded and
/// clamped to [0,255]. Input must be single channel U8.
ImageBuffer sobel_magnitude(const ImageBuffer& gray,
                            SobelMagnitude mode = SobelMagnitude::kEuclidean);

/// Bilinear resampling with half-pixel-centre alignment; U8 results are
/// rounded half up.
ImageBuffer resize_bilinear(const ImageBuffer& image, int width, int height);

/// U8 -> NORM: v / 127.5 - 1.
ImageBuffer normalize(const ImageBuffer& image);
/// NORM -> U8: round(clamp(v,-1,1) * 127.5 + 127.5).
ImageBuffer denormalize(const ImageBuffer& image);

/// Grayscale/Sobel chain for one RGB U8 image. Returns the generator input as
/// `spec.input_channels(mode)` single-channel NORM planes.
std::vector<ImageBuffer> preprocess_for_segmentation(const ImageBuffer& rgb,
                                                     const PreprocessSpec& spec, InputMode mode);

/// Rotates a single-channel image 90 degrees clockwise.
ImageBuffer rotate90(const ImageBuffer& image);

}  // namespace sim2seg::imaging
