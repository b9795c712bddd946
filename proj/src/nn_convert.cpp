#include "sim2seg/nn/convert.hpp"

#include <algorithm>

namespace sim2seg::nn {

Tensor<float> to_batch(const std::vector<const ImageBuffer*>& images) {
  if (images.empty()) throw Error(ErrorKind::kShape, "empty batch");
  const ImageBuffer& first = *images.front();
  const int w = first.width(), h = first.height(), c = first.channels();
  Tensor<float> t(static_cast<int>(images.size()), c, h, w);
  for (int n = 0; n < t.n(); ++n) {
    const ImageBuffer& img = *images[n];
    if (img.width() != w || img.height() != h || img.channels() != c) {
      throw Error(ErrorKind::kShape, "batch images differ in shape");
    }
    if (img.domain() != ValueDomain::kNorm) throw Error(ErrorKind::kDomain, "batch images must be NORM");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int k = 0; k < c; ++k) t.at(n, k, y, x) = img.at(x, y, k);
  }
  return t;
}

Tensor<float> to_batch(const ImageBuffer& image) { return to_batch({&image}); }

Tensor<float> stack_planes(const std::vector<ImageBuffer>& planes) {
  if (planes.empty()) throw Error(ErrorKind::kShape, "no planes to stack");
  const int w = planes.front().width(), h = planes.front().height();
  Tensor<float> t(1, static_cast<int>(planes.size()), h, w);
  for (int k = 0; k < t.c(); ++k) {
    const ImageBuffer& p = planes[k];
    if (p.channels() != 1 || p.width() != w || p.height() != h) {
      throw Error(ErrorKind::kShape, "planes differ in shape");
    }
    if (p.domain() != ValueDomain::kNorm) throw Error(ErrorKind::kDomain, "planes must be NORM");
    t.values().segment(k * t.plane(), t.plane()) = p.data();
  }
  return t;
}

ImageBuffer to_image(const Tensor<float>& batch, int index) {
  const int c = batch.c();
  if (c != 1 && c != 3) throw Error(ErrorKind::kShape, "tensor channel count is not 1 or 3");
  ImageBuffer img(batch.w(), batch.h(), c, ValueDomain::kNorm);
  for (int y = 0; y < batch.h(); ++y)
    for (int x = 0; x < batch.w(); ++x)
      for (int k = 0; k < c; ++k)
        img.at(x, y, k) = std::clamp(batch.at(index, k, y, x), -1.0f, 1.0f);
  return img;
}

}  // namespace sim2seg::nn
