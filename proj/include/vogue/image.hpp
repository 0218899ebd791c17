#pragma once

#include <cstddef>
#include <vector>

namespace vogue {

// H x W x C, row-major with channels innermost; values nominally in [0,1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  std::size_t index(std::size_t y, std::size_t x, std::size_t c) const {
    return (y * width + x) * channels + c;
  }
  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[index(y, x, c)]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[index(y, x, c)]; }

  bool operator==(const Image&) const = default;
};

}  // namespace vogue
