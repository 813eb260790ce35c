#include "maskseg/masking.hpp"

#include "maskseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace maskseg {

void validate(const MaskSpec& spec) {
  if (spec.patch < 1) throw std::invalid_argument("MaskSpec: patch size must be >= 1");
  if (!(spec.ratio >= 0.0 && spec.ratio < 1.0)) {
    throw std::invalid_argument("MaskSpec: ratio must lie in [0, 1)");
  }
}

int Mask::masked_cells() const {
  int n = 0;
  for (int r = 0; r < grid_rows(); ++r) {
    for (int c = 0; c < grid_cols(); ++c) n += cell_masked(r, c) ? 1 : 0;
  }
  return n;
}

Mask Mask::all_visible(int height, int width) {
  Mask m;
  m.height = height;
  m.width = width;
  m.patch = 1;
  m.visible.assign(static_cast<std::size_t>(height) * width, 1);
  return m;
}

Mask sample_mask(int height, int width, const MaskSpec& spec, Rng& rng) {
  validate(spec);
  if (height < spec.patch || width < spec.patch) {
    throw std::invalid_argument("sample_mask: image smaller than one patch");
  }
  Mask m;
  m.height = height;
  m.width = width;
  m.patch = spec.patch;
  m.visible.assign(static_cast<std::size_t>(height) * width, 1);
  const int rows = m.grid_rows(), cols = m.grid_cols();
  const int cells = rows * cols;
  const int n_masked = static_cast<int>(std::lround(spec.ratio * cells));

  // Partial Fisher-Yates: the first n_masked slots are a uniform sample.
  std::vector<int> order(static_cast<std::size_t>(cells));
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < n_masked; ++i) {
    std::uniform_int_distribution<int> pick(i, cells - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  for (int i = 0; i < n_masked; ++i) {
    const int r = order[i] / cols, c = order[i] % cols;
    for (int y = r * spec.patch; y < std::min(height, (r + 1) * spec.patch); ++y) {
      for (int x = c * spec.patch; x < std::min(width, (c + 1) * spec.patch); ++x) {
        m.visible[static_cast<std::size_t>(y) * width + x] = 0;
      }
    }
  }
  return m;
}

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& image, const Mask& mask) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != mask.height || s[1] != mask.width) {
    throw ShapeError("apply_mask: image " + shape_str(s) + " vs mask " + std::to_string(mask.height) +
                     "x" + std::to_string(mask.width));
  }
  NdArray<T> m(s);
  const int d = s[2];
  for (std::size_t p = 0; p < mask.visible.size(); ++p) {
    if (mask.visible[p]) std::fill_n(m.data.begin() + static_cast<std::ptrdiff_t>(p * d), d, T(1));
  }
  return mul(image, Tensor<T>::constant(std::move(m)));
}

std::size_t padded_pixel_count(int height, int width, const WeakGeometry& g) {
  const long rows = std::max(0L, static_cast<long>(height) - std::labs(g.offset_y - g.pad));
  const long cols = std::max(0L, static_cast<long>(width) - std::labs(g.offset_x - g.pad));
  return static_cast<std::size_t>(height) * width - static_cast<std::size_t>(rows * cols);
}

template <typename T>
WeakResult<T> apply_weak_geometry(const NdArray<T>& image, const LabelMap* label, const WeakGeometry& g) {
  const int h = image.dim(0), w = image.dim(1), d = image.dim(2);
  if (label && (label->height != h || label->width != w)) {
    throw std::invalid_argument("weak_perturb: label extents differ from image");
  }
  WeakResult<T> out;
  out.geometry = g;
  out.image = NdArray<T>(image.shape);
  out.padded.assign(static_cast<std::size_t>(h) * w, 0);
  if (label) out.label = LabelMap(h, w, kIgnoreLabel);
  for (int y = 0; y < h; ++y) {
    const int sy = y + g.offset_y - g.pad;
    for (int x = 0; x < w; ++x) {
      const int cx = x + g.offset_x - g.pad;
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      if (sy < 0 || sy >= h || cx < 0 || cx >= w) {
        out.padded[p] = 1;
        continue;
      }
      const int sx = g.flipped ? w - 1 - cx : cx;
      for (int c = 0; c < d; ++c) out.image.at(y, x, c) = image.at(sy, sx, c);
      if (label) out.label->at(y, x) = label->at(sy, sx);
    }
  }
  return out;
}

template <typename T>
WeakResult<T> weak_perturb(const NdArray<T>& image, const LabelMap* label, Rng& rng,
                           const WeakPerturbConfig& config) {
  WeakGeometry g;
  g.flipped = uniform01(rng) < config.flip_prob;
  g.pad = std::max(0, config.max_pad);
  std::uniform_int_distribution<int> offset(0, 2 * g.pad);
  g.offset_y = offset(rng);
  g.offset_x = offset(rng);
  return apply_weak_geometry(image, label, g);
}

template <typename T>
NdArray<T> strong_perturb(const NdArray<T>& image, Rng& rng, const StrongPerturbConfig& config) {
  const int d = image.dim(2);
  const double brightness = uniform(rng, -config.brightness, config.brightness);
  const double contrast = uniform(rng, 1.0 - config.contrast, 1.0 + config.contrast);
  std::vector<int> perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), 0);
  if (uniform01(rng) < config.channel_shuffle_prob) std::shuffle(perm.begin(), perm.end(), rng);

  double mean = 0.0;
  for (T v : image.data) mean += v;
  mean /= static_cast<double>(image.size());

  std::normal_distribution<double> noise(0.0, 1.0);
  NdArray<T> out(image.shape);
  const std::size_t positions = image.size() / static_cast<std::size_t>(d);
  for (std::size_t p = 0; p < positions; ++p) {
    for (int c = 0; c < d; ++c) {
      double v = image.data[p * d + perm[c]];
      if (contrast != 1.0) v = (v - mean) * contrast + mean;
      v += brightness;
      if (config.noise_std > 0.0) v += config.noise_std * noise(rng);
      out.data[p * d + c] = static_cast<T>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

#define MASKSEG_INSTANTIATE_MASKING(T)                                                            \
  template Tensor<T> apply_mask(const Tensor<T>&, const Mask&);                                    \
  template WeakResult<T> apply_weak_geometry(const NdArray<T>&, const LabelMap*, const WeakGeometry&); \
  template WeakResult<T> weak_perturb(const NdArray<T>&, const LabelMap*, Rng&, const WeakPerturbConfig&); \
  template NdArray<T> strong_perturb(const NdArray<T>&, Rng&, const StrongPerturbConfig&);

MASKSEG_INSTANTIATE_MASKING(float)
MASKSEG_INSTANTIATE_MASKING(double)

#undef MASKSEG_INSTANTIATE_MASKING

}  // namespace maskseg
