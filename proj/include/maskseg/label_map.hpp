#pragma once

#include <cstdint>
#include <vector>

namespace maskseg {

inline constexpr std::uint8_t kIgnoreLabel = 255;

// H x W map of class indices; kIgnoreLabel marks excluded pixels.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t size() const { return labels.size(); }
  std::uint8_t& at(int h, int w) { return labels[static_cast<std::size_t>(h) * width + w]; }
  std::uint8_t at(int h, int w) const { return labels[static_cast<std::size_t>(h) * width + w]; }

  bool operator==(const LabelMap&) const = default;
};

// Nearest-neighbour resampling; source index = floor(dst * src / dst_extent).
LabelMap resize_nearest(const LabelMap& src, int height, int width);

// Same sampling rule for any row-major H x W byte plane.
std::vector<std::uint8_t> resize_nearest(const std::vector<std::uint8_t>& plane, int height,
                                         int width, int new_height, int new_width);

}  // namespace maskseg
