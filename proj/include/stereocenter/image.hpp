#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sc {

/// Row-major 8-bit grayscale image.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::uint8_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  bool empty() const { return pixels.empty(); }
};

/// Binary (P5) or ASCII (P2) PGM with maxval <= 255.
GrayImage read_pgm(const std::filesystem::path& path);
/// Writes binary P5.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

}  // namespace sc
