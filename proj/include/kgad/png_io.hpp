#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgad/image.hpp"

namespace kgad {

// Decodes an 8-bit grayscale or RGB PNG into [0,1] by division by 255.
// Throws IoError when the file cannot be read and FormatError for other bit
// depths or colour types (palette and alpha images are rejected).
Image load_png(const std::string& path);

// Quantizes with round(v * 255) and writes an 8-bit PNG (no alpha).
void save_png(const Image& img, const std::string& path);

// The bytes save_png would store, in H x W x C order.
std::vector<std::uint8_t> quantize_bytes(const Image& img);

}  // namespace kgad
