#pragma once

// Patch masks and the desk-scale weak / strong image perturbations.

#include <cstdint>
#include <optional>
#include <vector>

#include "maskseg/label_map.hpp"
#include "maskseg/rng.hpp"
#include "maskseg/tensor.hpp"

namespace maskseg {

struct MaskSpec {
  int patch = 6;
  double ratio = 0.4;
};

void validate(const MaskSpec& spec);

// Binary H x W map, 1 = visible, 0 = masked. Constant on each patch cell;
// cells on the right / bottom border are cropped.
struct Mask {
  int height = 0;
  int width = 0;
  int patch = 1;
  std::vector<std::uint8_t> visible;

  int grid_rows() const { return (height + patch - 1) / patch; }
  int grid_cols() const { return (width + patch - 1) / patch; }
  int cells() const { return grid_rows() * grid_cols(); }
  bool cell_masked(int row, int col) const { return visible[static_cast<std::size_t>(row) * patch * width + col * patch] == 0; }
  int masked_cells() const;

  static Mask all_visible(int height, int width);
  bool operator==(const Mask&) const = default;
};

// Masks exactly round(ratio * cells) cells, chosen uniformly without
// replacement.
Mask sample_mask(int height, int width, const MaskSpec& spec, Rng& rng);

// Zeroes every channel at masked positions.
template <typename T>
Tensor<T> apply_mask(const Tensor<T>& image, const Mask& mask);

struct WeakPerturbConfig {
  double flip_prob = 0.5;
  int max_pad = 4;  // crop offset range is [0, 2 * max_pad] per axis
};

struct StrongPerturbConfig {
  double brightness = 0.2;     // additive, U(-a, a)
  double contrast = 0.3;       // factor U(1 - a, 1 + a) around the image mean
  double noise_std = 0.03;     // additive Gaussian
  double channel_shuffle_prob = 0.2;
};

// Geometry realized by one weak perturbation.
struct WeakGeometry {
  bool flipped = false;
  int offset_y = 0;  // crop window origin in padded coordinates
  int offset_x = 0;
  int pad = 0;
};

template <typename T>
struct WeakResult {
  NdArray<T> image;
  std::optional<LabelMap> label;   // padded pixels carry kIgnoreLabel
  std::vector<std::uint8_t> padded;  // 1 where the crop window left the source
  WeakGeometry geometry;
};

// Horizontal flip then crop-with-pad back to H x W; `label` follows the
// same geometry.
template <typename T>
WeakResult<T> weak_perturb(const NdArray<T>& image, const LabelMap* label, Rng& rng,
                           const WeakPerturbConfig& config = {});

template <typename T>
WeakResult<T> apply_weak_geometry(const NdArray<T>& image, const LabelMap* label,
                                  const WeakGeometry& geometry);

// Number of padded pixels an H x W crop at this geometry contains.
std::size_t padded_pixel_count(int height, int width, const WeakGeometry& geometry);

// Photometric only: brightness, contrast, noise, channel shuffle; output
// clamped to [0, 1]. Pixel coordinates never move.
template <typename T>
NdArray<T> strong_perturb(const NdArray<T>& image, Rng& rng, const StrongPerturbConfig& config = {});

}  // namespace maskseg
