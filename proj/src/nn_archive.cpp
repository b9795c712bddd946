#include "sim2seg/nn/archive.hpp"

#include "json.hpp"

#include <cstring>
#include <fstream>

namespace sim2seg::nn {
namespace {

constexpr char kMagic[8] = {'S', '2', 'S', 'A', 'R', 'C', '0', '1'};

}  // namespace

void TensorArchive::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["meta"] = nlohmann::json::parse(meta_json);
  std::uint64_t offset = 0;
  auto& table = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    table.push_back({{"name", name},
                     {"shape", {t.n(), t.c(), t.h(), t.w()}},
                     {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size());
  }
  const std::string text = header.dump();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp);
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingArtifact, "cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || len > (1ull << 30)) {
    throw Error(ErrorKind::kData, path.string() + " is not a tensor archive");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text, nullptr, false);
  if (header.is_discarded()) throw Error(ErrorKind::kData, "corrupt archive header in " + path.string());

  TensorArchive archive;
  archive.meta_json = header.at("meta").dump();
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::array<int, 4>>();
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw Error(ErrorKind::kData, "truncated archive " + path.string());
    archive.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return archive;
}

const Tensor<float>& TensorArchive::get(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorKind::kData, "archive has no tensor '" + name + "'");
  return it->second;
}

}  // namespace sim2seg::nn
