#include "maskseg/label_map.hpp"

#include <stdexcept>

namespace maskseg {

std::vector<std::uint8_t> resize_nearest(const std::vector<std::uint8_t>& plane, int height,
                                         int width, int new_height, int new_width) {
  if (new_height <= 0 || new_width <= 0) {
    throw std::invalid_argument("resize_nearest: target extents must be positive");
  }
  if (plane.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("resize_nearest: plane size does not match extents");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(new_height) * new_width);
  for (int y = 0; y < new_height; ++y) {
    const int sy = static_cast<int>(static_cast<long long>(y) * height / new_height);
    for (int x = 0; x < new_width; ++x) {
      const int sx = static_cast<int>(static_cast<long long>(x) * width / new_width);
      out[static_cast<std::size_t>(y) * new_width + x] = plane[static_cast<std::size_t>(sy) * width + sx];
    }
  }
  return out;
}

LabelMap resize_nearest(const LabelMap& src, int height, int width) {
  LabelMap out;
  out.height = height;
  out.width = width;
  out.labels = resize_nearest(src.labels, src.height, src.width, height, width);
  return out;
}

}  // namespace maskseg
