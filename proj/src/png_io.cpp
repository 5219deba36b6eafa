#include "kgad/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "kgad/errors.hpp"

namespace kgad {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void on_png_error(png_structp, png_const_charp msg) {
  throw FormatError(std::string("png: ") + msg);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> quantize_bytes(const Image& img) {
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    // std::round is half-away-from-zero, so 0.5 maps to byte 128.
    bytes[i] = static_cast<std::uint8_t>(std::round(img[i] * 255.0));
  }
  return bytes;
}

Image load_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8)) {
    throw FormatError(path + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           on_png_error, on_png_warning);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (!info) throw IoError("png_create_info_struct failed");

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8) {
    throw FormatError(path + ": unsupported bit depth " +
                      std::to_string(depth));
  }
  int channels = 0;
  if (color == PNG_COLOR_TYPE_GRAY) {
    channels = 1;
  } else if (color == PNG_COLOR_TYPE_RGB) {
    channels = 3;
  } else {
    throw FormatError(path + ": only 8-bit grayscale or RGB PNG is supported");
  }

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = &buffer[r * row_bytes];
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  Tensor t(static_cast<int>(height), static_cast<int>(width), channels);
  for (png_uint_32 r = 0; r < height; ++r) {
    for (png_uint_32 c = 0; c < width * channels; ++c) {
      t[r * width * channels + c] = rows[r][c] / 255.0;
    }
  }
  return Image::from_tensor(std::move(t));
}

void save_png(const Image& img, const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            on_png_error, on_png_warning);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (!info) throw IoError("png_create_info_struct failed");

  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8,
               img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> bytes = quantize_bytes(img);
  const std::size_t stride =
      static_cast<std::size_t>(img.width()) * img.channels();
  for (int r = 0; r < img.height(); ++r) {
    png_write_row(png, &bytes[r * stride]);
  }
  png_write_end(png, nullptr);
  if (std::fflush(file.get()) != 0) throw IoError("short write to " + path);
}

}  // namespace kgad
