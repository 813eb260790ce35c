#include "maskseg/protoagg.hpp"

#include <cmath>
#include <stdexcept>

namespace maskseg {

std::vector<std::uint8_t> exclusion_map(int height, int width, const LabelMap* label,
                                        const std::vector<std::uint8_t>* padded) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<std::uint8_t> out(n, 0);
  if (label) {
    if (label->size() != n) throw std::invalid_argument("exclusion_map: label extents mismatch");
    for (std::size_t i = 0; i < n; ++i) out[i] |= label->labels[i] == kIgnoreLabel ? 1 : 0;
  }
  if (padded) {
    if (padded->size() != n) throw std::invalid_argument("exclusion_map: pad map extents mismatch");
    for (std::size_t i = 0; i < n; ++i) out[i] |= (*padded)[i] ? 1 : 0;
  }
  return out;
}

RegionSets compute_region_sets(const ClassMaps& maps, const Mask& mask, const std::vector<std::uint8_t>& excluded) {
  if (excluded.size() != static_cast<std::size_t>(mask.height) * mask.width) {
    throw std::invalid_argument("compute_region_sets: exclusion map does not match mask extents");
  }
  const auto visible = resize_nearest(mask.visible, mask.height, mask.width, maps.height, maps.width);
  const auto unusable = resize_nearest(excluded, mask.height, mask.width, maps.height, maps.width);
  RegionSets sets;
  sets.height = maps.height;
  sets.width = maps.width;
  sets.visible.resize(static_cast<std::size_t>(maps.num_classes));
  sets.masked.resize(static_cast<std::size_t>(maps.num_classes));
  for (int p = 0; p < maps.height * maps.width; ++p) {
    if (unusable[p]) continue;
    const int c = maps.assignment.labels[p];
    (visible[p] ? sets.visible : sets.masked)[c].push_back(p);
  }
  return sets;
}

template <typename T>
std::vector<T> resize_plane_nearest(const std::vector<T>& plane, int height, int width, int new_height,
                                    int new_width) {
  if (plane.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("resize_plane_nearest: plane size does not match extents");
  }
  std::vector<T> out(static_cast<std::size_t>(new_height) * new_width);
  for (int y = 0; y < new_height; ++y) {
    const int sy = static_cast<int>(static_cast<long long>(y) * height / new_height);
    for (int x = 0; x < new_width; ++x) {
      const int sx = static_cast<int>(static_cast<long long>(x) * width / new_width);
      out[static_cast<std::size_t>(y) * new_width + x] = plane[static_cast<std::size_t>(sy) * width + sx];
    }
  }
  return out;
}

template <typename T>
PrototypeMemory<T>::PrototypeMemory(int num_classes, int dim, double alpha)
    : num_classes_(num_classes),
      dim_(dim),
      alpha_(alpha),
      values_(static_cast<std::size_t>(num_classes) * dim, T(0)),
      initialized_(static_cast<std::size_t>(num_classes), 0) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("PrototypeMemory: alpha must lie in [0, 1]");
}

template <typename T>
std::span<const T> PrototypeMemory<T>::prototype(int cls) const {
  return std::span<const T>(values_).subspan(static_cast<std::size_t>(cls) * dim_, static_cast<std::size_t>(dim_));
}

template <typename T>
void PrototypeMemory<T>::update(int cls, std::span<const T> sample) {
  if (cls < 0 || cls >= num_classes_) throw std::out_of_range("PrototypeMemory::update: bad class");
  if (sample.size() != static_cast<std::size_t>(dim_)) {
    throw std::invalid_argument("PrototypeMemory::update: sample has wrong dimension");
  }
  for (T v : sample) {
    if (!std::isfinite(static_cast<double>(v))) throw std::invalid_argument("PrototypeMemory::update: non-finite sample");
  }
  const T a = static_cast<T>(alpha_);
  const T b = static_cast<T>(1.0 - alpha_);
  T* dst = values_.data() + static_cast<std::size_t>(cls) * dim_;
  for (int j = 0; j < dim_; ++j) dst[j] = a * dst[j] + b * sample[j];
  initialized_[static_cast<std::size_t>(cls)] = 1;
}

template <typename T>
void PrototypeAccumulator<T>::add(const NdArray<T>& fea, std::span<const T> confidence,
                                  const std::vector<int>& positions) {
  const int d = fea.dim(2);
  if (static_cast<std::size_t>(d) != numerator_.size()) {
    throw std::invalid_argument("PrototypeAccumulator: feature dimension mismatch");
  }
  for (int p : positions) {
    const double w = confidence[static_cast<std::size_t>(p)];
    const T* z = fea.data.data() + static_cast<std::size_t>(p) * d;
    for (int j = 0; j < d; ++j) numerator_[j] += w * z[j];
    denominator_ += w;
  }
}

template <typename T>
std::vector<T> PrototypeAccumulator<T>::mean() const {
  if (empty()) throw std::logic_error("PrototypeAccumulator::mean on empty accumulator");
  std::vector<T> out(numerator_.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<T>(numerator_[j] / denominator_);
  return out;
}

template <typename T>
std::optional<std::vector<T>> compute_prototype(const NdArray<T>& fea, std::span<const T> confidence,
                                                const std::vector<int>& positions) {
  if (positions.empty()) return std::nullopt;
  PrototypeAccumulator<T> acc(fea.dim(2));
  acc.add(fea, confidence, positions);
  if (acc.empty()) return std::nullopt;
  return acc.mean();
}

template <typename T>
T cos_loss(std::span<const T> z, std::span<const T> v, T tau) {
  if (z.size() != v.size()) throw std::invalid_argument("cos_loss: dimension mismatch");
  T zz = T(0), vv = T(0), zv = T(0);
  for (std::size_t j = 0; j < z.size(); ++j) {
    zz += z[j] * z[j];
    vv += v[j] * v[j];
    zv += z[j] * v[j];
  }
  if (zz == T(0) || vv == T(0)) throw std::invalid_argument("cos_loss: zero-norm vector");
  return (T(1) - zv / (std::sqrt(zz) * std::sqrt(vv))) / tau;
}

template <typename T>
AggregationTerm<T> aggregation_term(const Tensor<T>& fea, std::span<const T> confidence, std::span<const T> prototype,
                                    const std::vector<int>& positions, T tau) {
  const int d = fea.shape()[2];
  NdArray<T> weights({fea.shape()[0], fea.shape()[1], 1});
  AggregationTerm<T> term;
  const T* f = fea.value().data.data();
  for (int p : positions) {
    const T* z = f + static_cast<std::size_t>(p) * d;
    bool nonzero = false;
    for (int j = 0; j < d && !nonzero; ++j) nonzero = z[j] != T(0);
    if (!nonzero) continue;
    weights.data[static_cast<std::size_t>(p)] = confidence[static_cast<std::size_t>(p)];
    term.weight += confidence[static_cast<std::size_t>(p)];
  }
  term.weighted_loss = weighted_sum(prototype_cosine_loss_map(fea, prototype, tau), weights);
  return term;
}

template <typename T>
Tensor<T> aggregation_loss(const Tensor<T>& fea, std::span<const T> confidence, std::span<const T> prototype,
                           const std::vector<int>& positions, T tau) {
  AggregationTerm<T> term = aggregation_term(fea, confidence, prototype, positions, tau);
  if (!(term.weight > T(0))) throw std::invalid_argument("aggregation_loss: no usable masked position");
  return scale(term.weighted_loss, T(1) / term.weight);
}

template <typename T>
std::vector<std::optional<std::vector<T>>> batch_prototypes(const std::vector<FeatureStream<T>>& streams,
                                                            int num_classes) {
  std::vector<std::optional<std::vector<T>>> out(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    std::optional<PrototypeAccumulator<T>> acc;
    for (const auto& s : streams) {
      const auto& positions = s.regions.visible[static_cast<std::size_t>(c)];
      if (positions.empty()) continue;
      const NdArray<T>& fea = s.grouped.groups[static_cast<std::size_t>(c)].value();
      if (!acc) acc.emplace(fea.dim(2));
      acc->add(fea, s.confidence, positions);
    }
    if (acc && !acc->empty()) out[static_cast<std::size_t>(c)] = acc->mean();
  }
  return out;
}

template <typename T>
Tensor<T> mim_feature_loss(const std::vector<FeatureStream<T>>& streams, const PrototypeMemory<T>& memory,
                           double lambda_mf, double tau) {
  std::vector<Tensor<T>> class_losses;
  for (int c = 0; c < memory.num_classes(); ++c) {
    if (!memory.initialized(c)) continue;
    const auto proto = memory.prototype(c);
    bool any_nonzero = false;
    for (T v : proto) any_nonzero = any_nonzero || v != T(0);
    if (!any_nonzero) continue;
    std::vector<Tensor<T>> numerators;
    T weight = T(0);
    for (const auto& s : streams) {
      const auto& positions = s.regions.masked[static_cast<std::size_t>(c)];
      if (positions.empty()) continue;
      AggregationTerm<T> term = aggregation_term(s.grouped.groups[static_cast<std::size_t>(c)], std::span<const T>(s.confidence),
                                                 proto, positions, static_cast<T>(tau));
      if (!(term.weight > T(0))) continue;
      numerators.push_back(term.weighted_loss);
      weight += term.weight;
    }
    if (numerators.empty()) continue;
    class_losses.push_back(scale(add_n(numerators), T(1) / weight));
  }
  if (class_losses.empty()) return Tensor<T>::scalar(T(0));
  return scale(add_n(class_losses), static_cast<T>(lambda_mf) / static_cast<T>(class_losses.size()));
}

#define MASKSEG_INSTANTIATE_PROTOAGG(T)                                                             \
  template std::vector<T> resize_plane_nearest(const std::vector<T>&, int, int, int, int);           \
  template class PrototypeMemory<T>;                                                                \
  template class PrototypeAccumulator<T>;                                                           \
  template std::optional<std::vector<T>> compute_prototype(const NdArray<T>&, std::span<const T>,   \
                                                           const std::vector<int>&);                \
  template T cos_loss(std::span<const T>, std::span<const T>, T);                                   \
  template AggregationTerm<T> aggregation_term(const Tensor<T>&, std::span<const T>, std::span<const T>, \
                                               const std::vector<int>&, T);                         \
  template Tensor<T> aggregation_loss(const Tensor<T>&, std::span<const T>, std::span<const T>,      \
                                      const std::vector<int>&, T);                                  \
  template std::vector<std::optional<std::vector<T>>> batch_prototypes(const std::vector<FeatureStream<T>>&, int); \
  template Tensor<T> mim_feature_loss(const std::vector<FeatureStream<T>>&, const PrototypeMemory<T>&, double, double);

MASKSEG_INSTANTIATE_PROTOAGG(float)
MASKSEG_INSTANTIATE_PROTOAGG(double)

#undef MASKSEG_INSTANTIATE_PROTOAGG

}  // namespace maskseg
