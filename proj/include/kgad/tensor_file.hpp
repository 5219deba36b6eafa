#pragma once

#include <map>
#include <string>
#include <vector>

namespace kgad {

// A named array with an arbitrary shape, as stored in a tensor file.
struct NamedArray {
  std::vector<int> shape;
  std::vector<double> values;
};

using TensorBundle = std::map<std::string, NamedArray>;

// Tensor files are a flat little-endian IEEE-754 float32 stream (`path`) plus
// a JSON sidecar (`path + ".json"`) of the form
//   {"format": "kgad-f32", "tensors": [{"name": ..., "shape": [...],
//    "offset": <element offset>}, ...]}
// Tensors are stored in name order. Values are narrowed to float32 on write.
void write_tensor_file(const std::string& path, const TensorBundle& bundle);
TensorBundle read_tensor_file(const std::string& path);

std::string sidecar_path(const std::string& path);

}  // namespace kgad
