#pragma once

// Class-wise mask-induced feature aggregation: visible / masked position
// sets per class, confidence-weighted prototypes kept in a moving-average
// memory, and a cosine pull of masked-part features toward them.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "maskseg/cwmim.hpp"
#include "maskseg/masking.hpp"

namespace maskseg {

// Flat feature-grid positions per class.
struct RegionSets {
  int height = 0;
  int width = 0;
  std::vector<std::vector<int>> visible;  // Omega_c^v
  std::vector<std::vector<int>> masked;   // Omega_c^m
};

// 1 where a full-resolution pixel is unusable: ignore-marked in `label` or
// outside the source image in `padded`. Either argument may be null.
std::vector<std::uint8_t> exclusion_map(int height, int width, const LabelMap* label,
                                        const std::vector<std::uint8_t>* padded);

// Mask and exclusion map are full resolution and resampled to the class-map
// grid by nearest neighbour.
RegionSets compute_region_sets(const ClassMaps& maps, const Mask& mask,
                               const std::vector<std::uint8_t>& excluded);

// Full-resolution per-position values resampled to the feature grid.
template <typename T>
std::vector<T> resize_plane_nearest(const std::vector<T>& plane, int height, int width, int new_height,
                                    int new_width);

template <typename T>
class PrototypeMemory {
 public:
  PrototypeMemory() = default;
  PrototypeMemory(int num_classes, int dim, double alpha);

  int num_classes() const { return num_classes_; }
  int dim() const { return dim_; }
  double alpha() const { return alpha_; }
  bool initialized(int cls) const { return initialized_.at(static_cast<std::size_t>(cls)) != 0; }
  std::span<const T> prototype(int cls) const;

  // v <- alpha v + (1 - alpha) sample
  void update(int cls, std::span<const T> sample);

  // Raw storage for checkpointing: C x D values and C flags.
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }
  std::vector<std::uint8_t>& flags() { return initialized_; }
  const std::vector<std::uint8_t>& flags() const { return initialized_; }

  bool operator==(const PrototypeMemory&) const = default;

 private:
  int num_classes_ = 0;
  int dim_ = 0;
  double alpha_ = 0.99;
  std::vector<T> values_;
  std::vector<std::uint8_t> initialized_;
};

template <typename T>
void ema_update(PrototypeMemory<T>& memory, int cls, std::span<const T> sample) {
  memory.update(cls, sample);
}

// Running numerator / denominator of a confidence-weighted mean of feature
// vectors; several images can feed one accumulator.
template <typename T>
class PrototypeAccumulator {
 public:
  explicit PrototypeAccumulator(int dim) : numerator_(static_cast<std::size_t>(dim), 0.0) {}

  void add(const NdArray<T>& fea, std::span<const T> confidence, const std::vector<int>& positions);
  bool empty() const { return !(denominator_ > 0.0); }
  std::vector<T> mean() const;

 private:
  std::vector<double> numerator_;
  double denominator_ = 0.0;
};

// Confidence-weighted mean of fea_c over `positions`; nullopt when empty.
template <typename T>
std::optional<std::vector<T>> compute_prototype(const NdArray<T>& fea, std::span<const T> confidence,
                                                const std::vector<int>& positions);

// (1 - cos(z, v)) / tau.
template <typename T>
T cos_loss(std::span<const T> z, std::span<const T> v, T tau);

template <typename T>
struct AggregationTerm {
  Tensor<T> weighted_loss;  // sum over positions of conf * cos_loss
  T weight = T(0);          // sum of conf over positions that contributed
};

// Zero-norm feature vectors are skipped along with their confidence.
template <typename T>
AggregationTerm<T> aggregation_term(const Tensor<T>& fea, std::span<const T> confidence,
                                    std::span<const T> prototype, const std::vector<int>& positions, T tau);

// Confidence-weighted mean of cos_loss over `positions`.
template <typename T>
Tensor<T> aggregation_loss(const Tensor<T>& fea, std::span<const T> confidence, std::span<const T> prototype,
                           const std::vector<int>& positions, T tau);

// One masked stream of one image: grouped features, confidence on the
// feature grid and its region sets.
template <typename T>
struct FeatureStream {
  GroupedFeatures<T> grouped;
  std::vector<T> confidence;
  RegionSets regions;
};

// Prototypes of the current batch from the visible parts of the given
// streams, pooled over all of them; nullopt for classes with no position.
template <typename T>
std::vector<std::optional<std::vector<T>>> batch_prototypes(const std::vector<FeatureStream<T>>& streams,
                                                            int num_classes);

// lambda_mf times the mean over active classes of the aggregation loss over
// the combined masked positions of all streams. A class is active when its
// combined masked set is non-empty and its prototype is initialized.
template <typename T>
Tensor<T> mim_feature_loss(const std::vector<FeatureStream<T>>& streams, const PrototypeMemory<T>& memory,
                           double lambda_mf, double tau);

}  // namespace maskseg
