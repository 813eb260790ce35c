#include "maskseg/semmim.hpp"

#include <stdexcept>

namespace maskseg {

double LossWeights::normalizer(const LossToggles& t) const {
  return 1.0 + 2.0 * (t.unlabeled ? lambda_u : 0.0) + 3.0 * (t.pixel ? lambda_mp : 0.0) +
         3.0 * (t.feature ? lambda_mf : 0.0) + 3.0 * (t.semantic ? lambda_ms : 0.0);
}

template <typename T>
Tensor<T> total_loss(const LossTerms<T>& terms, const LossWeights& weights, const LossToggles& toggles) {
  if (!terms.supervised.defined()) throw std::invalid_argument("total_loss: supervised term missing");
  std::vector<Tensor<T>> parts{terms.supervised};
  if (toggles.unlabeled && terms.unlabeled.defined()) parts.push_back(terms.unlabeled);
  if (toggles.pixel && terms.pixel.defined()) parts.push_back(terms.pixel);
  if (toggles.feature && terms.feature.defined()) parts.push_back(terms.feature);
  if (toggles.semantic && terms.semantic.defined()) parts.push_back(terms.semantic);
  return scale(add_n(parts), static_cast<T>(1.0 / weights.normalizer(toggles)));
}

template <typename T>
LossReport report_of(const LossTerms<T>& terms, const Tensor<T>& total) {
  auto value = [](const Tensor<T>& t) { return t.defined() ? static_cast<double>(t.item()) : 0.0; };
  LossReport r;
  r.supervised = value(terms.supervised);
  r.unlabeled = value(terms.unlabeled);
  r.pixel = value(terms.pixel);
  r.feature = value(terms.feature);
  r.semantic = value(terms.semantic);
  r.total = value(total);
  return r;
}

template <typename T>
SemanticTargets<T> pseudo_label_for_semantic_targets(const std::vector<NdArray<T>>& labeled_probs,
                                                     const std::vector<NdArray<T>>& strong_probs,
                                                     const std::vector<NdArray<T>>& fp_probs, double threshold) {
  SemanticTargets<T> t;
  for (const auto& p : labeled_probs) t.labeled.push_back(make_pseudo_label(p, threshold));
  for (const auto& p : strong_probs) t.strong.push_back(make_pseudo_label(p, threshold));
  for (const auto& p : fp_probs) t.fp.push_back(make_pseudo_label(p, threshold));
  t.labeled_probs = labeled_probs;
  t.strong_probs = strong_probs;
  t.fp_probs = fp_probs;
  return t;
}

namespace {

template <typename T>
Tensor<T> consistency(const Tensor<T>& masked, const PseudoLabel<T>& target, const NdArray<T>& original,
                      const SemanticOptions& options) {
  if (options.kind == SemanticLossKind::kMse) return mse(masked, Tensor<T>::constant(original));
  return cross_entropy(masked, options.gated ? target.gated() : target.label);
}

}  // namespace

template <typename T>
Tensor<T> semantic_mim_loss(const std::vector<Tensor<T>>& masked_labeled, const std::vector<Tensor<T>>& masked_strong,
                            const std::vector<Tensor<T>>& masked_fp, const SemanticTargets<T>& targets,
                            double lambda_ms, const SemanticOptions& options) {
  const std::size_t b = masked_labeled.size();
  if (masked_strong.size() != b || masked_fp.size() != b || targets.labeled.size() != b ||
      targets.strong.size() != b || targets.fp.size() != b) {
    throw std::invalid_argument("semantic_mim_loss: all streams need the same batch size");
  }
  if (options.kind == SemanticLossKind::kMse &&
      (targets.labeled_probs.size() != b || targets.strong_probs.size() != b || targets.fp_probs.size() != b)) {
    throw std::invalid_argument("semantic_mim_loss: MSE variant needs the original probabilities");
  }
  static const NdArray<T> kNone;
  auto original = [&](const std::vector<NdArray<T>>& v, std::size_t i) -> const NdArray<T>& {
    return i < v.size() ? v[i] : kNone;
  };
  std::vector<Tensor<T>> terms;
  terms.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    terms.push_back(add_n<T>({
        consistency(masked_labeled[i], targets.labeled[i], original(targets.labeled_probs, i), options),
        consistency(masked_strong[i], targets.strong[i], original(targets.strong_probs, i), options),
        consistency(masked_fp[i], targets.fp[i], original(targets.fp_probs, i), options),
    }));
  }
  return scale(batch_mean(terms), static_cast<T>(lambda_ms));
}

#define MASKSEG_INSTANTIATE_SEMMIM(T)                                                              \
  template Tensor<T> total_loss(const LossTerms<T>&, const LossWeights&, const LossToggles&);      \
  template LossReport report_of(const LossTerms<T>&, const Tensor<T>&);                            \
  template SemanticTargets<T> pseudo_label_for_semantic_targets(                                   \
      const std::vector<NdArray<T>>&, const std::vector<NdArray<T>>&, const std::vector<NdArray<T>>&, double); \
  template Tensor<T> semantic_mim_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, \
                                       const std::vector<Tensor<T>>&, const SemanticTargets<T>&, double, \
                                       const SemanticOptions&);

MASKSEG_INSTANTIATE_SEMMIM(float)
MASKSEG_INSTANTIATE_SEMMIM(double)

#undef MASKSEG_INSTANTIATE_SEMMIM

}  // namespace maskseg
