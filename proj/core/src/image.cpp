#include "splatfuse/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "splatfuse/common.hpp"

namespace splatfuse {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

bool host_is_little_endian() {
  const uint16_t probe = 1;
  return *reinterpret_cast<const uint8_t*>(&probe) == 1;
}

}  // namespace

Image load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open PNG: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("malformed PNG: " + path.string());
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unsupported PNG channel count in " + path.string());
  }

  Image img(static_cast<int>(w), static_cast<int>(h), channels);
  std::vector<uint8_t> row(static_cast<std::size_t>(w) * channels);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t i = 0; i < row.size(); ++i)
      img.data[static_cast<std::size_t>(y) * w * channels + i] = row[i] / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("PNG writer supports 1 or 3 channels");
  if (img.width <= 0 || img.height <= 0) throw DataError("cannot save empty image");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write PNG: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failed: " + path.string());
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = to_byte(img.data[static_cast<std::size_t>(y) * img.width * img.channels + i]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open PFM: " + path.string());

  std::string magic;
  in >> magic;
  int channels;
  if (magic == "Pf")
    channels = 1;
  else if (magic == "PF")
    channels = 3;
  else
    throw DataError("bad PFM magic in " + path.string());

  int w = 0, h = 0;
  double scale = 0.0;
  in >> w >> h >> scale;
  if (!in || w <= 0 || h <= 0 || scale == 0.0)
    throw DataError("bad PFM header in " + path.string());
  in.get();  // single whitespace after the scale

  Image img(w, h, channels);
  const std::size_t row_floats = static_cast<std::size_t>(w) * channels;
  std::vector<float> row(row_floats);
  const bool file_little = scale < 0.0;
  for (int y = h - 1; y >= 0; --y) {  // bottom-up storage
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_floats * 4));
    if (!in) throw DataError("truncated PFM body in " + path.string());
    if (file_little != host_is_little_endian()) {
      for (float& v : row) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        bits = __builtin_bswap32(bits);
        std::memcpy(&v, &bits, 4);
      }
    }
    std::copy(row.begin(), row.end(),
              img.data.begin() + static_cast<std::size_t>(y) * row_floats);
  }
  return img;
}

void save_pfm(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("PFM writer supports 1 or 3 channels");
  if (img.width <= 0 || img.height <= 0) throw DataError("cannot save empty image");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write PFM: " + path.string());
  out << (img.channels == 1 ? "Pf" : "PF") << "\n"
      << img.width << " " << img.height << "\n"
      << "-1.0\n";  // negative scale marks little-endian

  const std::size_t row_floats = static_cast<std::size_t>(img.width) * img.channels;
  std::vector<float> row(row_floats);
  for (int y = img.height - 1; y >= 0; --y) {
    std::copy(img.data.begin() + static_cast<std::size_t>(y) * row_floats,
              img.data.begin() + static_cast<std::size_t>(y + 1) * row_floats, row.begin());
    if (!host_is_little_endian()) {
      for (float& v : row) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        bits = __builtin_bswap32(bits);
        std::memcpy(&v, &bits, 4);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row_floats * 4));
  }
  if (!out) throw DataError("PFM write failed: " + path.string());
}

}  // namespace splatfuse
