#include "kgad/tensor_file.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include <nlohmann/json.hpp>

#include "kgad/errors.hpp"

namespace kgad {
namespace {

static_assert(sizeof(float) == 4);

std::size_t element_count(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int d) {
                           if (d < 0) throw FormatError("negative tensor dimension");
                           return a * static_cast<std::size_t>(d);
                         });
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) |
        (v >> 24);
  }
  return v;
}

}  // namespace

std::string sidecar_path(const std::string& path) { return path + ".json"; }

void write_tensor_file(const std::string& path, const TensorBundle& bundle) {
  std::ofstream data(path, std::ios::binary);
  if (!data) throw IoError("cannot write " + path);
  nlohmann::json index;
  index["format"] = "kgad-f32";
  index["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, arr] : bundle) {
    if (element_count(arr.shape) != arr.values.size()) {
      throw DimensionError("tensor '" + name + "' shape does not match data");
    }
    index["tensors"].push_back(
        {{"name", name}, {"shape", arr.shape}, {"offset", offset}});
    for (double v : arr.values) {
      const std::uint32_t bits =
          to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      data.write(reinterpret_cast<const char*>(&bits), 4);
    }
    offset += arr.values.size();
  }
  if (!data) throw IoError("short write to " + path);
  std::ofstream side(sidecar_path(path));
  if (!side) throw IoError("cannot write " + sidecar_path(path));
  side << index.dump(2) << '\n';
}

TensorBundle read_tensor_file(const std::string& path) {
  std::ifstream side(sidecar_path(path));
  if (!side) throw IoError("cannot open " + sidecar_path(path));
  nlohmann::json index;
  try {
    side >> index;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar_path(path) + ": " + e.what());
  }
  if (index.value("format", "") != "kgad-f32") {
    throw FormatError(sidecar_path(path) + ": unknown tensor format");
  }

  std::ifstream data(path, std::ios::binary | std::ios::ate);
  if (!data) throw IoError("cannot open " + path);
  const std::size_t total = static_cast<std::size_t>(data.tellg()) / 4;
  data.seekg(0);
  std::vector<std::uint32_t> raw(total);
  data.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(total * 4));

  TensorBundle bundle;
  try {
    for (const auto& entry : index.at("tensors")) {
      NamedArray arr;
      arr.shape = entry.at("shape").get<std::vector<int>>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t count = element_count(arr.shape);
      if (offset + count > total) {
        throw FormatError(path + ": tensor '" +
                          entry.at("name").get<std::string>() +
                          "' exceeds the data stream");
      }
      arr.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        arr.values[i] =
            std::bit_cast<float>(to_little_endian(raw[offset + i]));
      }
      bundle[entry.at("name").get<std::string>()] = std::move(arr);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar_path(path) + ": " + e.what());
  }
  return bundle;
}

}  // namespace kgad
