#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace splatfuse {

// Row-major float image, row 0 at the top. 1 channel (depth, mask, weight)
// or 3 channels (RGB in [0,1]).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool empty() const { return data.empty(); }

  // Mean over channels at a pixel; used for grayscale matching.
  float luminance(int x, int y) const {
    float s = 0.0f;
    for (int c = 0; c < channels; ++c) s += at(x, y, c);
    return s / static_cast<float>(channels);
  }
};

// 8-bit PNG, grayscale or RGB. Values are mapped via round(v*255) on save and
// v/255 on load, clamped to [0,1].
Image load_png(const std::filesystem::path& path);
void save_png(const Image& img, const std::filesystem::path& path);

// PFM float32: little-endian ("Pf"/"PF" with negative scale), scanlines
// bottom-up. 1 or 3 channels.
Image load_pfm(const std::filesystem::path& path);
void save_pfm(const Image& img, const std::filesystem::path& path);

}  // namespace splatfuse
