#pragma once

#include <vector>

#include "sim2seg/core.hpp"
#include "sim2seg/nn/tensor.hpp"

namespace sim2seg::nn {

/// Packs NORM images (same size and channel count) into an NCHW batch.
Tensor<float> to_batch(const std::vector<const ImageBuffer*>& images);
Tensor<float> to_batch(const ImageBuffer& image);

/// Stacks single-channel planes into one [1,C,H,W] tensor.
Tensor<float> stack_planes(const std::vector<ImageBuffer>& planes);

/// Unpacks sample `index` as a NORM image, clamping to [-1,1].
ImageBuffer to_image(const Tensor<float>& batch, int index = 0);

}  // namespace sim2seg::nn
