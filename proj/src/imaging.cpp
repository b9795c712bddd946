#include "sim2seg/imaging.hpp"

#include <algorithm>
#include <cmath>

namespace sim2seg::imaging {

std::string PreprocessSpec::check(InputMode mode) const {
  if (sobel && !grayscale) return "preprocess.sobel requires preprocess.grayscale";
  if (!sobel && mode != InputMode::kGray) {
    return "segmentation.input_mode uses Sobel but preprocess.sobel is false";
  }
  return {};
}

ImageBuffer to_grayscale(const ImageBuffer& rgb) {
  if (rgb.channels() != 3) throw Error(ErrorKind::kShape, "to_grayscale expects 3 channels");
  if (rgb.domain() != ValueDomain::kU8) throw Error(ErrorKind::kDomain, "to_grayscale expects U8");
  ImageBuffer out(rgb.width(), rgb.height(), 1, ValueDomain::kU8);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      const auto r = static_cast<long>(rgb.at(x, y, 0));
      const auto g = static_cast<long>(rgb.at(x, y, 1));
      const auto b = static_cast<long>(rgb.at(x, y, 2));
      // Weights in thousandths keep the half-up rounding exact.
      out.at(x, y) = static_cast<float>((299 * r + 587 * g + 114 * b + 500) / 1000);
    }
  }
  return out;
}

ImageBuffer sobel_magnitude(const ImageBuffer& gray, SobelMagnitude mode) {
  if (gray.channels() != 1) throw Error(ErrorKind::kShape, "sobel_magnitude expects 1 channel");
  const int w = gray.width();
  const int h = gray.height();
  ImageBuffer out(w, h, 1, ValueDomain::kU8);
  if (w == 0 || h == 0) return out;
  auto px = [&](int x, int y) {
    return static_cast<double>(gray.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      const double m = mode == SobelMagnitude::kEuclidean ? std::sqrt(gx * gx + gy * gy)
                                                          : std::abs(gx) + std::abs(gy);
      out.at(x, y) = static_cast<float>(std::min(255.0, std::floor(m + 0.5)));
    }
  }
  return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& image, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::kShape, "resize target must be positive");
  if (image.width() == width && image.height() == height) return image;
  if (image.empty()) throw Error(ErrorKind::kShape, "cannot resize an empty image");
  const int c = image.channels();
  ImageBuffer out(width, height, c, image.domain());
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double wx = fx - x0;
      for (int k = 0; k < c; ++k) {
        const double top = (1 - wx) * image.at(x0, y0, k) + wx * image.at(x1, y0, k);
        const double bot = (1 - wx) * image.at(x0, y1, k) + wx * image.at(x1, y1, k);
        double v = (1 - wy) * top + wy * bot;
        if (image.domain() == ValueDomain::kU8) v = std::clamp(std::floor(v + 0.5), 0.0, 255.0);
        out.at(x, y, k) = static_cast<float>(v);
      }
    }
  }
  return out;
}

ImageBuffer normalize(const ImageBuffer& image) {
  if (image.domain() != ValueDomain::kU8) throw Error(ErrorKind::kDomain, "normalize expects U8");
  Eigen::ArrayXf v = image.data() / 127.5f - 1.0f;
  return {image.width(), image.height(), image.channels(), ValueDomain::kNorm, std::move(v)};
}

ImageBuffer denormalize(const ImageBuffer& image) {
  if (image.domain() != ValueDomain::kNorm) {
    throw Error(ErrorKind::kDomain, "denormalize expects NORM");
  }
  Eigen::ArrayXf v = image.data().unaryExpr([](float x) {
    const double c = std::clamp(static_cast<double>(x), -1.0, 1.0);
    return static_cast<float>(std::floor(c * 127.5 + 127.5 + 0.5));
  });
  return {image.width(), image.height(), image.channels(), ValueDomain::kU8, std::move(v)};
}

std::vector<ImageBuffer> preprocess_for_segmentation(const ImageBuffer& rgb,
                                                     const PreprocessSpec& spec, InputMode mode) {
  if (const auto bad = spec.check(mode); !bad.empty()) throw Error(ErrorKind::kConfig, bad);
  if (!spec.grayscale) {
    std::vector<ImageBuffer> planes;
    for (int k = 0; k < 3; ++k) {
      ImageBuffer plane(rgb.width(), rgb.height(), 1, ValueDomain::kU8);
      for (int y = 0; y < rgb.height(); ++y) {
        for (int x = 0; x < rgb.width(); ++x) plane.at(x, y) = rgb.at(x, y, k);
      }
      planes.push_back(normalize(plane));
    }
    return planes;
  }
  const ImageBuffer gray = to_grayscale(rgb);
  switch (mode) {
    case InputMode::kGray:
      return {normalize(gray)};
    case InputMode::kSobel:
      return {normalize(sobel_magnitude(gray, spec.magnitude))};
    case InputMode::kGraySobel:
      return {normalize(gray), normalize(sobel_magnitude(gray, spec.magnitude))};
  }
  return {};
}

ImageBuffer rotate90(const ImageBuffer& image) {
  const int w = image.width();
  const int h = image.height();
  const int c = image.channels();
  ImageBuffer out(h, w, c, image.domain());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) out.at(h - 1 - y, x, k) = image.at(x, y, k);
    }
  }
  return out;
}

}  // namespace sim2seg::imaging
