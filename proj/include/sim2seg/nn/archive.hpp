#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "sim2seg/nn/tensor.hpp"

namespace sim2seg::nn {

/// Named float32 tensors plus a JSON metadata string, stored as one file:
/// 8-byte magic, u64 header length, JSON header, little-endian payload.
struct TensorArchive {
  std::string meta_json = "{}";
  std::map<std::string, Tensor<float>> tensors;

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

  const Tensor<float>& get(const std::string& name) const;
};

}  // namespace sim2seg::nn
