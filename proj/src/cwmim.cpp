#include "maskseg/cwmim.hpp"

#include <algorithm>
#include <stdexcept>

#include "maskseg/phase1.hpp"

namespace maskseg {

std::vector<std::uint8_t> ClassMaps::plane(int cls) const {
  std::vector<std::uint8_t> out(assignment.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = assignment.labels[i] == cls ? 1 : 0;
  return out;
}

template <typename T>
NdArray<T> ClassMaps::replicated(int cls) const {
  NdArray<T> out({height, width, channels});
  for (std::size_t p = 0; p < assignment.size(); ++p) {
    if (assignment.labels[p] == cls) {
      std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>(p * channels), channels, T(1));
    }
  }
  return out;
}

ClassMaps build_class_maps(const LabelMap& pseudo, int height, int width, int channels, int num_classes) {
  for (auto v : pseudo.labels) {
    if (v >= num_classes) {
      throw std::invalid_argument("build_class_maps: pseudo-label value " + std::to_string(v) +
                                  " is not a class in [0, " + std::to_string(num_classes) + ")");
    }
  }
  ClassMaps maps;
  maps.height = height;
  maps.width = width;
  maps.channels = channels;
  maps.num_classes = num_classes;
  maps.assignment = resize_nearest(pseudo, height, width);
  return maps;
}

template <typename T>
GroupedFeatures<T> group_features(const Tensor<T>& fea, const ClassMaps& maps) {
  const Shape expected{maps.height, maps.width, maps.channels};
  if (fea.shape() != expected) {
    throw ShapeError("group_features: features " + shape_str(fea.shape()) + " vs class maps " +
                     shape_str(expected));
  }
  GroupedFeatures<T> out;
  out.groups.reserve(static_cast<std::size_t>(maps.num_classes));
  for (int c = 0; c < maps.num_classes; ++c) {
    out.groups.push_back(mul(fea, Tensor<T>::constant(maps.replicated<T>(c))));
  }
  return out;
}

template <typename T>
Tensor<T> reconstruct(const SegNetParams<T>& params, const GroupedFeatures<T>& grouped, int height, int width) {
  if (grouped.groups.size() != params.heads.size()) {
    throw std::invalid_argument("reconstruct: " + std::to_string(grouped.groups.size()) + " groups for " +
                                std::to_string(params.heads.size()) + " heads");
  }
  std::vector<Tensor<T>> parts;
  parts.reserve(grouped.groups.size());
  for (std::size_t c = 0; c < grouped.groups.size(); ++c) {
    parts.push_back(head_apply(params, static_cast<int>(c), grouped.groups[c], height, width));
  }
  return add_n(parts);
}

template <typename T>
Tensor<T> reconstruct_plain(const SegNetParams<T>& params, const Tensor<T>& fea, int height, int width) {
  std::vector<Tensor<T>> parts;
  for (std::size_t c = 0; c < params.heads.size(); ++c) {
    parts.push_back(head_apply(params, static_cast<int>(c), fea, height, width));
  }
  return add_n(parts);
}

template <typename T>
NdArray<T> build_fp_target_from_encoding(const SegNetParams<T>& params, const NdArray<T>& enc,
                                         const LabelMap& weak_pseudo, int height, int width, bool classwise) {
  NoGradGuard no_grad;
  Tensor<T> fea = pixel_trunk(params, Tensor<T>::constant(enc));
  if (!classwise) return reconstruct_plain(params, fea, height, width).value();
  const ClassMaps maps = build_class_maps(weak_pseudo, fea.shape()[0], fea.shape()[1], fea.shape()[2],
                                          params.config.num_classes);
  return reconstruct(params, group_features(fea, maps), height, width).value();
}

template <typename T>
NdArray<T> build_fp_target(const SegNetParams<T>& params, const NdArray<T>& weak_image, const ChannelKeep& keep,
                           const LabelMap& weak_pseudo, bool classwise) {
  NoGradGuard no_grad;
  Tensor<T> enc = encode(params, Tensor<T>::constant(weak_image), &keep);
  return build_fp_target_from_encoding(params, enc.value(), weak_pseudo, weak_image.dim(0), weak_image.dim(1),
                                       classwise);
}

template <typename T>
Tensor<T> mim_pixel_loss(const std::vector<Tensor<T>>& r_l, const std::vector<Tensor<T>>& x_l,
                         const std::vector<Tensor<T>>& r_s, const std::vector<Tensor<T>>& x_s,
                         const std::vector<Tensor<T>>& r_fp, const std::vector<Tensor<T>>& x_fp,
                         double lambda_mp) {
  const std::size_t b = r_l.size();
  if (x_l.size() != b || r_s.size() != b || x_s.size() != b || r_fp.size() != b || x_fp.size() != b) {
    throw std::invalid_argument("mim_pixel_loss: all streams need the same batch size");
  }
  std::vector<Tensor<T>> terms;
  terms.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    terms.push_back(add_n<T>({mse(r_l[i], x_l[i]), mse(r_s[i], x_s[i]), mse(r_fp[i], x_fp[i])}));
  }
  return scale(batch_mean(terms), static_cast<T>(lambda_mp));
}

#define MASKSEG_INSTANTIATE_CWMIM(T)                                                               \
  template NdArray<T> ClassMaps::replicated<T>(int) const;                                         \
  template GroupedFeatures<T> group_features(const Tensor<T>&, const ClassMaps&);                  \
  template Tensor<T> reconstruct(const SegNetParams<T>&, const GroupedFeatures<T>&, int, int);     \
  template Tensor<T> reconstruct_plain(const SegNetParams<T>&, const Tensor<T>&, int, int);        \
  template NdArray<T> build_fp_target(const SegNetParams<T>&, const NdArray<T>&, const ChannelKeep&, \
                                      const LabelMap&, bool);                                      \
  template NdArray<T> build_fp_target_from_encoding(const SegNetParams<T>&, const NdArray<T>&,     \
                                                    const LabelMap&, int, int, bool);              \
  template Tensor<T> mim_pixel_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,  \
                                    const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,  \
                                    const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, double);

MASKSEG_INSTANTIATE_CWMIM(float)
MASKSEG_INSTANTIATE_CWMIM(double)

#undef MASKSEG_INSTANTIATE_CWMIM

}  // namespace maskseg
