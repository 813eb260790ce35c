#pragma once

// Masked consistency in semantic space and the normalized overall objective.

#include <vector>

#include "maskseg/phase1.hpp"

namespace maskseg {

struct LossToggles {
  bool unlabeled = true;
  bool pixel = true;
  bool feature = true;
  bool semantic = true;

  bool any_masked() const { return pixel || feature || semantic; }
  bool operator==(const LossToggles&) const = default;
};

struct LossWeights {
  double lambda_u = 0.5;
  double lambda_mp = 1.0 / 3.0;
  double lambda_mf = 0.05;
  double lambda_ms = 0.1 / 3.0;

  // 1 + 2 lambda_u + 3 lambda_mp + 3 lambda_mf + 3 lambda_ms, with the weight
  // of every disabled component taken as 0.
  double normalizer(const LossToggles& toggles = {}) const;
  bool operator==(const LossWeights&) const = default;
};

struct LossReport {
  double supervised = 0.0;
  double unlabeled = 0.0;
  double pixel = 0.0;
  double feature = 0.0;
  double semantic = 0.0;
  double total = 0.0;
};

template <typename T>
struct LossTerms {
  // Undefined tensors count as 0.
  Tensor<T> supervised, unlabeled, pixel, feature, semantic;
};

template <typename T>
Tensor<T> total_loss(const LossTerms<T>& terms, const LossWeights& weights, const LossToggles& toggles = {});

template <typename T>
LossReport report_of(const LossTerms<T>& terms, const Tensor<T>& total);

// Ungated argmax targets from the unmasked streams, one per image.
template <typename T>
struct SemanticTargets {
  std::vector<PseudoLabel<T>> labeled, strong, fp;
  std::vector<NdArray<T>> labeled_probs, strong_probs, fp_probs;  // for the MSE variant
};

template <typename T>
SemanticTargets<T> pseudo_label_for_semantic_targets(const std::vector<NdArray<T>>& labeled_probs,
                                                     const std::vector<NdArray<T>>& strong_probs,
                                                     const std::vector<NdArray<T>>& fp_probs, double threshold);

enum class SemanticLossKind { kCrossEntropy, kMse };

struct SemanticOptions {
  SemanticLossKind kind = SemanticLossKind::kCrossEntropy;
  bool gated = false;  // apply the pseudo-label confidence gate to the targets
};

// (1 / B) sum_b lambda_ms [CE(p^l_m, y^l) + CE(p^s_m, y^s) + CE(p^fp_m, y^fp)].
template <typename T>
Tensor<T> semantic_mim_loss(const std::vector<Tensor<T>>& masked_labeled, const std::vector<Tensor<T>>& masked_strong,
                            const std::vector<Tensor<T>>& masked_fp, const SemanticTargets<T>& targets,
                            double lambda_ms, const SemanticOptions& options = {});

}  // namespace maskseg
