#include "maskseg/phase1.hpp"

#include <stdexcept>

namespace maskseg {

template <typename T>
LabelMap PseudoLabel<T>::gated() const {
  LabelMap out = label;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!gate[i]) out.labels[i] = kIgnoreLabel;
  }
  return out;
}

template <typename T>
std::size_t PseudoLabel<T>::gated_count() const {
  std::size_t n = 0;
  for (auto g : gate) n += g ? 1 : 0;
  return n;
}

template <typename T>
PseudoLabel<T> make_pseudo_label(const NdArray<T>& probs, double threshold) {
  PseudoLabel<T> pl;
  pl.label = argmax_channels(probs);
  pl.confidence = max_channels(probs);
  pl.gate.resize(pl.confidence.size());
  for (std::size_t i = 0; i < pl.gate.size(); ++i) {
    pl.gate[i] = pl.confidence[i] >= static_cast<T>(threshold) ? 1 : 0;
  }
  return pl;
}

template <typename T>
Tensor<T> batch_mean(const std::vector<Tensor<T>>& terms) {
  if (terms.empty()) throw std::invalid_argument("batch_mean: empty batch");
  return scale(add_n(terms), T(1) / static_cast<T>(terms.size()));
}

template <typename T>
Tensor<T> supervised_loss(const std::vector<Tensor<T>>& probs, const std::vector<LabelMap>& labels) {
  if (probs.size() != labels.size()) throw std::invalid_argument("supervised_loss: batch size mismatch");
  std::vector<Tensor<T>> terms;
  terms.reserve(probs.size());
  for (std::size_t b = 0; b < probs.size(); ++b) terms.push_back(cross_entropy(probs[b], labels[b]));
  return batch_mean(terms);
}

template <typename T>
Tensor<T> unlabeled_loss(const std::vector<Tensor<T>>& strong_probs, const std::vector<Tensor<T>>& fp_probs,
                         const std::vector<PseudoLabel<T>>& pseudo, double lambda_u, GateReduction reduction) {
  if (strong_probs.size() != pseudo.size() || fp_probs.size() != pseudo.size()) {
    throw std::invalid_argument("unlabeled_loss: batch size mismatch");
  }
  const CeReduction ce =
      reduction == GateReduction::kGatedMean ? CeReduction::kMeanValid : CeReduction::kMeanAll;
  std::vector<Tensor<T>> terms;
  terms.reserve(pseudo.size());
  for (std::size_t b = 0; b < pseudo.size(); ++b) {
    const LabelMap target = pseudo[b].gated();
    terms.push_back(add(cross_entropy(strong_probs[b], target, ce), cross_entropy(fp_probs[b], target, ce)));
  }
  return scale(batch_mean(terms), static_cast<T>(lambda_u));
}

#define MASKSEG_INSTANTIATE_PHASE1(T)                                                              \
  template struct PseudoLabel<T>;                                                                  \
  template PseudoLabel<T> make_pseudo_label(const NdArray<T>&, double);                            \
  template Tensor<T> batch_mean(const std::vector<Tensor<T>>&);                                    \
  template Tensor<T> supervised_loss(const std::vector<Tensor<T>>&, const std::vector<LabelMap>&); \
  template Tensor<T> unlabeled_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,  \
                                    const std::vector<PseudoLabel<T>>&, double, GateReduction);

MASKSEG_INSTANTIATE_PHASE1(float)
MASKSEG_INSTANTIATE_PHASE1(double)

#undef MASKSEG_INSTANTIATE_PHASE1

}  // namespace maskseg
