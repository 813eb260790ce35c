#pragma once

// Class-wise masked image modeling in pixel space: pseudo-label class maps
// at feature resolution, grouping of pixel-trunk features by class, one head
// per group, and the three-stream reconstruction loss.

#include <cstdint>
#include <vector>

#include "maskseg/label_map.hpp"
#include "maskseg/nets.hpp"

namespace maskseg {

// Binary class planes at feature resolution. Each position belongs to
// exactly one class.
struct ClassMaps {
  int height = 0;
  int width = 0;
  int channels = 0;
  int num_classes = 0;
  LabelMap assignment;

  std::vector<std::uint8_t> plane(int cls) const;
  // plane(cls) replicated across `channels`.
  template <typename T>
  NdArray<T> replicated(int cls) const;
};

// Nearest-neighbour downsample of a full-image pseudo-label. The label must
// not contain ignore markers.
ClassMaps build_class_maps(const LabelMap& pseudo, int height, int width, int channels,
                           int num_classes);

template <typename T>
struct GroupedFeatures {
  std::vector<Tensor<T>> groups;  // groups[c] = fea * class plane c
};

template <typename T>
GroupedFeatures<T> group_features(const Tensor<T>& fea, const ClassMaps& maps);

// r = sum_c Head_c(fea_c), summed in ascending class order.
template <typename T>
Tensor<T> reconstruct(const SegNetParams<T>& params, const GroupedFeatures<T>& grouped, int height,
                      int width);

// Ungrouped variant, r = sum_c Head_c(fea): same heads, no class routing.
template <typename T>
Tensor<T> reconstruct_plain(const SegNetParams<T>& params, const Tensor<T>& fea, int height, int width);

// Reconstruction of the unmasked weak image under the given dropout
// realization and grouping. Computed without a tape; the result is a
// constant regression target.
template <typename T>
NdArray<T> build_fp_target(const SegNetParams<T>& params, const NdArray<T>& weak_image,
                           const ChannelKeep& keep, const LabelMap& weak_pseudo, bool classwise = true);

// Same, starting from already computed (perturbed) encoder features.
template <typename T>
NdArray<T> build_fp_target_from_encoding(const SegNetParams<T>& params, const NdArray<T>& enc,
                                         const LabelMap& weak_pseudo, int height, int width,
                                         bool classwise = true);

// (1 / B) sum_b lambda_mp [mse(r_l, x_l) + mse(r_s, x_s) + mse(r_fp, x_fp)].
template <typename T>
Tensor<T> mim_pixel_loss(const std::vector<Tensor<T>>& r_l, const std::vector<Tensor<T>>& x_l,
                         const std::vector<Tensor<T>>& r_s, const std::vector<Tensor<T>>& x_s,
                         const std::vector<Tensor<T>>& r_fp, const std::vector<Tensor<T>>& x_fp,
                         double lambda_mp);

}  // namespace maskseg
