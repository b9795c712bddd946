#pragma once

#include <filesystem>

#include "sim2seg/core.hpp"

namespace sim2seg::io {

/// Reads any codec-supported image as 3-channel RGB U8. Throws kIo.
ImageBuffer read_rgb(const std::filesystem::path& path);

/// Writes a 1- or 3-channel U8 image as 8-bit PNG.
void write_png(const std::filesystem::path& path, const ImageBuffer& image);

/// Raw instance ids as a 16-bit single-channel PNG.
void write_mask_png(const std::filesystem::path& path, const InstanceMask& mask);
InstanceMask read_mask_png(const std::filesystem::path& path);

/// Depth in meters, stored as 16-bit millimeters (0 = no hit).
void write_depth_png(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_depth_png(const std::filesystem::path& path);

/// Color-coded 8-bit RGB rendering of an instance mask for inspection.
ImageBuffer colorize(const InstanceMask& mask);

}  // namespace sim2seg::io
