#pragma once

// One iteration of the two-phase objective: the random realizations it
// consumes, and the loss they produce under given parameters.

#include <vector>

#include "maskseg/data.hpp"
#include "maskseg/protoagg.hpp"
#include "maskseg/train_config.hpp"

namespace maskseg {

struct TrainData {
  const Corpus* corpus = nullptr;
  SplitManifest split;
  std::vector<int> labeled;  // corpus indices, in split order
  std::vector<int> unlabeled;
};

TrainData make_train_data(const Corpus& corpus, const SplitManifest& split);

struct LabeledView {
  NdArray<float> image;  // weakly perturbed
  LabelMap label;        // padded pixels ignore-marked
  std::vector<std::uint8_t> padded;
};

struct UnlabeledView {
  NdArray<float> weak;
  NdArray<float> strong;  // photometric perturbation of `weak`
  std::vector<std::uint8_t> padded;
};

struct PhaseInputs {
  std::vector<int> labeled_ids;  // corpus indices
  std::vector<int> unlabeled_ids;
  std::vector<LabeledView> labeled;
  std::vector<UnlabeledView> unlabeled;
  std::vector<ChannelKeep> keeps;  // one feature-dropout realization per unlabeled image
  // Phase II only: one mask per stream and image.
  std::vector<Mask> mask_labeled, mask_strong, mask_weak;
};

// Everything random about one iteration. Derived from (seeds, iteration)
// alone, so any iteration can be rebuilt without replaying earlier ones.
struct PreparedIteration {
  int iteration = 0;
  PhaseInputs one;
  PhaseInputs two;
  bool has_two = false;
};

bool phase_two_active(const TrainConfig& config);

PreparedIteration prepare_iteration(const TrainConfig& config, const TrainData& data, int iteration);

// Detached quantities of one objective evaluation. Filled on the first call
// and replayed afterwards, which keeps them constant under finite
// differences.
template <typename T>
struct FrozenTargets {
  bool filled = false;
  std::vector<PseudoLabel<T>> weak_one;  // Phase I pseudo-labels, padded pixels gated off
  std::vector<PseudoLabel<T>> labeled, weak, strong, fp;
  std::vector<NdArray<T>> labeled_probs, strong_probs, fp_probs;
  std::vector<NdArray<T>> fp_target;
  PrototypeMemory<T> memory;  // after this iteration's update
};

template <typename T>
struct Objective {
  Tensor<T> total;
  LossTerms<T> terms;
  LossReport report;
};

// `memory` receives this iteration's prototype update unless `frozen`
// already holds targets, in which case the frozen snapshot is used instead.
template <typename T>
Objective<T> compute_objective(const SegNetParams<T>& params, const PreparedIteration& prepared,
                               const TrainConfig& config, PrototypeMemory<T>& memory,
                               FrozenTargets<T>* frozen = nullptr);

}  // namespace maskseg
