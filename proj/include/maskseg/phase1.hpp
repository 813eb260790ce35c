#pragma once

// Semi-supervised baseline: supervised cross-entropy on labeled images and
// confidence-gated pseudo-label consistency on two strongly perturbed views.

#include <cstdint>
#include <vector>

#include "maskseg/label_map.hpp"
#include "maskseg/ops.hpp"

namespace maskseg {

template <typename T>
struct PseudoLabel {
  LabelMap label;                  // argmax, lowest index on ties
  std::vector<T> confidence;       // max class probability
  std::vector<std::uint8_t> gate;  // confidence >= threshold

  // Label map with every non-gated position set to kIgnoreLabel.
  LabelMap gated() const;
  std::size_t gated_count() const;
};

// Built from plain values, so nothing here is on the autodiff tape.
template <typename T>
PseudoLabel<T> make_pseudo_label(const NdArray<T>& probs, double threshold);

enum class GateReduction {
  kGatedMean,  // mean over positions that pass the gate
  kAllMean,    // mean over all positions, non-gated ones contribute 0
};

// (1 / B) sum_b CE(probs_b, labels_b), ignore-marked pixels excluded.
template <typename T>
Tensor<T> supervised_loss(const std::vector<Tensor<T>>& probs, const std::vector<LabelMap>& labels);

// (1 / B) sum_b lambda_u [CE_gated(strong_b) + CE_gated(feature_perturbed_b)].
template <typename T>
Tensor<T> unlabeled_loss(const std::vector<Tensor<T>>& strong_probs,
                         const std::vector<Tensor<T>>& fp_probs,
                         const std::vector<PseudoLabel<T>>& pseudo, double lambda_u,
                         GateReduction reduction = GateReduction::kGatedMean);

// Mean of a batch of scalar tensors.
template <typename T>
Tensor<T> batch_mean(const std::vector<Tensor<T>>& terms);

}  // namespace maskseg
