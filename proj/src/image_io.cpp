#include "sim2seg/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace sim2seg::io {
namespace {

const std::vector<int> kPngParams = {cv::IMWRITE_PNG_COMPRESSION, 6};

void write_or_throw(const std::filesystem::path& path, const cv::Mat& mat) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat, kPngParams);
  } catch (const cv::Exception& e) {
    throw Error(ErrorKind::kIo, "cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

cv::Mat read_or_throw(const std::filesystem::path& path, int flags) {
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), flags);
  } catch (const cv::Exception& e) {
    throw Error(ErrorKind::kIo, "cannot read " + path.string() + ": " + e.what());
  }
  if (mat.empty()) throw Error(ErrorKind::kIo, "cannot decode " + path.string());
  return mat;
}

}  // namespace

ImageBuffer read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = read_or_throw(path, cv::IMREAD_COLOR);
  if (bgr.depth() != CV_8U) bgr.convertTo(bgr, CV_8U);
  ImageBuffer out(bgr.cols, bgr.rows, 3, ValueDomain::kU8);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      out.at(x, y, 0) = row[x][2];
      out.at(x, y, 1) = row[x][1];
      out.at(x, y, 2) = row[x][0];
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image) {
  if (image.domain() != ValueDomain::kU8) {
    throw Error(ErrorKind::kDomain, "write_png expects a U8 image");
  }
  const int c = image.channels();
  cv::Mat mat(image.height(), image.width(), c == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) {
      if (c == 3) {
        row[3 * x + 0] = static_cast<std::uint8_t>(image.at(x, y, 2));
        row[3 * x + 1] = static_cast<std::uint8_t>(image.at(x, y, 1));
        row[3 * x + 2] = static_cast<std::uint8_t>(image.at(x, y, 0));
      } else {
        row[x] = static_cast<std::uint8_t>(image.at(x, y));
      }
    }
  }
  write_or_throw(path, mat);
}

void write_mask_png(const std::filesystem::path& path, const InstanceMask& mask) {
  cv::Mat mat(mask.height(), mask.width(), CV_16UC1);
  for (int y = 0; y < mask.height(); ++y) {
    auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < mask.width(); ++x) {
      const auto id = mask.at(x, y);
      if (id > std::numeric_limits<std::uint16_t>::max()) {
        throw Error(ErrorKind::kData, "instance id exceeds 16-bit range");
      }
      row[x] = static_cast<std::uint16_t>(id);
    }
  }
  write_or_throw(path, mat);
}

InstanceMask read_mask_png(const std::filesystem::path& path) {
  cv::Mat mat = read_or_throw(path, cv::IMREAD_UNCHANGED);
  if (mat.channels() != 1) {
    throw Error(ErrorKind::kData, path.string() + " is not a single-channel mask");
  }
  if (mat.depth() != CV_16U) mat.convertTo(mat, CV_16U);
  InstanceMask mask(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < mat.cols; ++x) mask.at(x, y) = row[x];
  }
  return mask;
}

void write_depth_png(const std::filesystem::path& path, const DepthMap& depth) {
  cv::Mat mat(static_cast<int>(depth.rows()), static_cast<int>(depth.cols()), CV_16UC1);
  for (int y = 0; y < mat.rows; ++y) {
    auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < mat.cols; ++x) {
      const double mm = std::round(depth(y, x) * 1000.0);
      row[x] = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
    }
  }
  write_or_throw(path, mat);
}

DepthMap read_depth_png(const std::filesystem::path& path) {
  cv::Mat mat = read_or_throw(path, cv::IMREAD_UNCHANGED);
  if (mat.channels() != 1 || mat.depth() != CV_16U) {
    throw Error(ErrorKind::kData, path.string() + " is not a 16-bit depth image");
  }
  DepthMap depth(mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < mat.cols; ++x) depth(y, x) = row[x] / 1000.0;
  }
  return depth;
}

ImageBuffer colorize(const InstanceMask& mask) {
  ImageBuffer out(mask.width(), mask.height(), 3, ValueDomain::kU8);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const auto id = mask.at(x, y);
      if (id == 0) continue;
      // Knuth multiplicative hash spreads neighbouring ids across hues.
      const std::uint32_t h = id * 2654435761u;
      out.at(x, y, 0) = static_cast<float>(64 + (h & 0xbf));
      out.at(x, y, 1) = static_cast<float>(64 + ((h >> 8) & 0xbf));
      out.at(x, y, 2) = static_cast<float>(64 + ((h >> 16) & 0xbf));
    }
  }
  return out;
}

}  // namespace sim2seg::io
