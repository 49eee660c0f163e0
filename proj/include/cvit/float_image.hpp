#pragma once

#include <cstddef>
#include <vector>

namespace cvit {

/// Normalized 3-channel image, channel-major like ImageU8.
template <typename T>
struct FloatImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> values;

  FloatImage() = default;
  FloatImage(std::size_t h, std::size_t w) : height(h), width(w), values(3 * h * w) {}

  T at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * height + y) * width + x];
  }
  T& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
};

}  // namespace cvit
