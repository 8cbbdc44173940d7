#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace mer {

// Interleaved 8-bit RGB, row-major (height x width x 3).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(h * w * 3, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// PNG of any libpng-supported color type, converted to 8-bit RGB.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace mer
