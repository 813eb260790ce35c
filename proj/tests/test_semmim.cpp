#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskseg/oracles.hpp"
#include "maskseg/semmim.hpp"

using namespace maskseg;
using TD = Tensor<double>;

namespace {

NdArray<double> probs(std::vector<double> values) {
  const int c = 2;
  const int n = static_cast<int>(values.size()) / c;
  return NdArray<double>({1, n, c}, std::move(values));
}

LossTerms<double> terms_of(double s, double u, double p, double f, double m) {
  return {TD::scalar(s), TD::scalar(u), TD::scalar(p), TD::scalar(f), TD::scalar(m)};
}

}  // namespace

TEST_CASE("the default normalizer is 3.25 and shrinks with disabled components") {
  const LossWeights w;
  CHECK(w.normalizer() == doctest::Approx(3.25).epsilon(1e-15));
  CHECK(w.normalizer({false, true, true, true}) == doctest::Approx(2.25).epsilon(1e-15));
  CHECK(w.normalizer({true, false, true, true}) == doctest::Approx(2.25).epsilon(1e-15));
  CHECK(w.normalizer({true, true, false, true}) == doctest::Approx(3.10).epsilon(1e-15));
  CHECK(w.normalizer({true, true, true, false}) == doctest::Approx(3.15).epsilon(1e-15));
  CHECK(w.normalizer({false, false, false, false}) == 1.0);
}

TEST_CASE("total loss divides the active components by the normalizer") {
  const LossWeights w;
  CHECK(total_loss(terms_of(1.0, 0.75, 0.5, 0.6, 0.4), w).item() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(total_loss(terms_of(0, 0, 0, 0, 0), w).item() == 0.0);

  const double parts[5] = {0.7, 0.2, 0.05, 0.003, 0.01};
  const LossTerms<double> t = terms_of(parts[0], parts[1], parts[2], parts[3], parts[4]);
  for (int off = 0; off < 4; ++off) {
    LossToggles tg;
    bool* flags[4] = {&tg.unlabeled, &tg.pixel, &tg.feature, &tg.semantic};
    *flags[off] = false;
    LossTerms<double> active = t;
    Tensor<double>* slots[4] = {&active.unlabeled, &active.pixel, &active.feature, &active.semantic};
    *slots[off] = Tensor<double>();
    double s = 0;
    for (int i = 0; i < 5; ++i) s += (i == off + 1) ? 0.0 : parts[i];
    CHECK(total_loss(active, w, tg).item() == doctest::Approx(s / w.normalizer(tg)).epsilon(1e-15));
  }

  const TD total = total_loss(t, w);
  const LossReport r = report_of(t, total);
  CHECK(r.supervised == parts[0]);
  CHECK(r.semantic == parts[4]);
  CHECK(r.total == total.item());
}

TEST_CASE("total loss is linear in each component with slope one over the normalizer") {
  const LossWeights w;
  LossTerms<double> t = terms_of(0.3, 0.1, 0.2, 0.05, 0.01);
  const TD s = TD::parameter(NdArray<double>({1}, {0.3}));
  t.supervised = s;
  backward(total_loss(t, w));
  CHECK(s.grad().data[0] == doctest::Approx(1 / 3.25).epsilon(1e-15));
}

TEST_CASE("semantic targets are ungated argmax labels of the unmasked streams") {
  const auto l = probs({0.6, 0.4, 0.1, 0.9});
  const auto s = probs({0.3, 0.7, 0.55, 0.45});
  const auto fp = probs({0.99, 0.01, 0.2, 0.8});
  const auto t = pseudo_label_for_semantic_targets<double>({l}, {s}, {fp}, 0.95);
  CHECK(t.labeled[0].label.labels == std::vector<std::uint8_t>{0, 1});
  CHECK(t.strong[0].label.labels == argmax_channels(s).labels);
  CHECK(t.fp[0].label.labels == std::vector<std::uint8_t>{0, 1});
  CHECK(t.strong_probs[0].data == s.data);
  const auto again = pseudo_label_for_semantic_targets<double>({l}, {s}, {fp}, 0.95);
  CHECK(again.strong[0].label == t.strong[0].label);
}

TEST_CASE("semantic loss arithmetic") {
  const auto one_hot = probs({1, 0, 0, 1});
  const auto t = pseudo_label_for_semantic_targets<double>({one_hot}, {one_hot}, {one_hot}, 0.95);
  const TD exact = TD::constant(one_hot);
  CHECK(semantic_mim_loss<double>({exact}, {exact}, {exact}, t, 0.1 / 3).item() == 0.0);

  const double e = std::exp(-1.0);
  const TD unit = TD::constant(probs({e, 1 - e, 1 - e, e}));
  CHECK(semantic_mim_loss<double>({unit}, {unit}, {unit}, t, 0.1 / 3).item() == doctest::Approx(0.1).epsilon(1e-14));

  SemanticOptions mse_opt;
  mse_opt.kind = SemanticLossKind::kMse;
  CHECK(semantic_mim_loss<double>({exact}, {exact}, {exact}, t, 0.1 / 3, mse_opt).item() == 0.0);
}

TEST_CASE("semantic loss has no confidence gate unless asked") {
  const auto unsure = probs({0.6, 0.4, 0.3, 0.7});
  const auto t = pseudo_label_for_semantic_targets<double>({unsure}, {unsure}, {unsure}, 0.95);
  const TD pred = TD::constant(probs({0.2, 0.8, 0.5, 0.5}));
  const double ungated = semantic_mim_loss<double>({pred}, {pred}, {pred}, t, 1.0).item();
  CHECK(ungated == doctest::Approx(3 * (-std::log(0.2) - std::log(0.5)) / 2).epsilon(1e-14));
  SemanticOptions gated;
  gated.gated = true;
  CHECK(semantic_mim_loss<double>({pred}, {pred}, {pred}, t, 1.0, gated).item() == 0.0);
}

TEST_CASE("semantic loss reaches the masked predictions only") {
  const TD original_logits = TD::parameter(probs({2, 0, 0, 1}));
  const TD original = softmax_channels(original_logits);
  const auto t = pseudo_label_for_semantic_targets<double>({original.value()}, {original.value()}, {original.value()}, 0.95);
  const TD masked = TD::parameter(probs({0.4, 0.6, 0.5, 0.5}));
  backward(semantic_mim_loss<double>({masked}, {masked}, {masked}, t, 0.1 / 3));
  CHECK(masked.has_grad());
  CHECK_FALSE(original_logits.has_grad());
}

TEST_CASE("semantic loss gradients agree with finite differences") {
  for (const auto& r : run_oracles("semmim")) {
    INFO(r.name);
    CHECK(r.check.max_rel_error < kGradTolerance);
  }
}
