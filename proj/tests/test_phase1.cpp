#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskseg/objective.hpp"
#include "maskseg/oracles.hpp"
#include "maskseg/phase1.hpp"

using namespace maskseg;
using TD = Tensor<double>;

namespace {

NdArray<double> probs_of(int h, int w, std::vector<double> values) {
  const int c = static_cast<int>(values.size()) / (h * w);
  return NdArray<double>({h, w, c}, std::move(values));
}

LabelMap labels_of(int h, int w, std::vector<std::uint8_t> values) {
  LabelMap y(h, w);
  y.labels = std::move(values);
  return y;
}

}  // namespace

TEST_CASE("pseudo-labels: argmax, confidence and threshold gate") {
  const auto one_hot = make_pseudo_label(probs_of(1, 2, {0, 1, 1, 0}), 1.0);
  CHECK(one_hot.label.labels == std::vector<std::uint8_t>{1, 0});
  CHECK(one_hot.confidence == std::vector<double>{1, 1});
  CHECK(one_hot.gated_count() == 2u);

  const auto uniform = make_pseudo_label(probs_of(1, 1, {0.25, 0.25, 0.25, 0.25}), 0.95);
  CHECK(uniform.label.labels[0] == 0);
  CHECK(uniform.confidence[0] == 0.25);
  CHECK(uniform.gate[0] == 0);
  CHECK(uniform.gated().labels[0] == kIgnoreLabel);

  const auto sharp = make_pseudo_label(probs_of(1, 1, {0.96, 0.04}), 0.95);
  CHECK(sharp.label.labels[0] == 0);
  CHECK(sharp.gate[0] == 1);
  CHECK(sharp.gated().labels[0] == 0);
}

TEST_CASE("raising the threshold never gates more positions") {
  Rng rng(3);
  NdArray<double> p({6, 6, 3});
  for (std::size_t i = 0; i < p.size(); i += 3) {
    double a = uniform01(rng), b = uniform01(rng), c = uniform01(rng) * 4;
    const double s = a + b + c;
    p.data[i] = a / s, p.data[i + 1] = b / s, p.data[i + 2] = c / s;
  }
  std::size_t previous = 36;
  for (double psi = 0.0; psi <= 1.0; psi += 0.05) {
    const auto pl = make_pseudo_label(p, psi);
    CHECK(pl.gated_count() <= previous);
    previous = pl.gated_count();
  }
}

TEST_CASE("supervised loss is the batch mean of per-image cross-entropy") {
  const TD perfect = TD::constant(probs_of(1, 2, {1, 0, 0, 1}));
  const LabelMap y = labels_of(1, 2, {0, 1});
  CHECK(supervised_loss<double>({perfect}, {y}).item() == 0.0);
  CHECK(supervised_loss<double>({perfect}, {LabelMap(1, 2, kIgnoreLabel)}).item() == 0.0);

  const TD a = TD::constant(probs_of(1, 1, {0.5, 0.5}));
  const TD b = TD::constant(probs_of(1, 1, {0.2, 0.8}));
  const LabelMap zero = labels_of(1, 1, {0});
  const double want = (-std::log(0.5) - std::log(0.2)) / 2;
  CHECK(supervised_loss<double>({a, b}, {zero, zero}).item() == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("unlabeled loss: closed gates give zero and one gated pixel gives lambda_u * 2 * -ln q") {
  const auto closed = make_pseudo_label(probs_of(1, 2, {0.6, 0.4, 0.5, 0.5}), 0.95);
  const TD s = TD::constant(probs_of(1, 2, {0.1, 0.9, 0.3, 0.7}));
  CHECK(unlabeled_loss<double>({s}, {s}, {closed}, 0.5).item() == 0.0);

  const auto open = make_pseudo_label(probs_of(1, 2, {1, 0, 0, 1}), 0.95);
  const TD match = TD::constant(probs_of(1, 2, {1, 0, 0, 1}));
  CHECK(unlabeled_loss<double>({match}, {match}, {open}, 0.5).item() == 0.0);

  const double q = 0.3;
  const auto single = make_pseudo_label(probs_of(1, 2, {0.99, 0.01, 0.5, 0.5}), 0.95);
  const TD pred = TD::constant(probs_of(1, 2, {q, 1 - q, 0.9, 0.1}));
  CHECK(unlabeled_loss<double>({pred}, {pred}, {single}, 0.5).item() ==
        doctest::Approx(0.5 * 2 * -std::log(q)).epsilon(1e-14));
  // Mean over all positions halves it: one of two positions is gated.
  CHECK(unlabeled_loss<double>({pred}, {pred}, {single}, 0.5, GateReduction::kAllMean).item() ==
        doctest::Approx(0.5 * -std::log(q)).epsilon(1e-14));
}

TEST_CASE("unlabeled loss depends on the weak probabilities only through argmax and gate") {
  const TD s = TD::constant(probs_of(1, 3, {0.2, 0.8, 0.6, 0.4, 0.7, 0.3}));
  const TD fp = TD::constant(probs_of(1, 3, {0.3, 0.7, 0.1, 0.9, 0.5, 0.5}));
  const auto a = make_pseudo_label(probs_of(1, 3, {0.97, 0.03, 0.01, 0.99, 0.6, 0.4}), 0.95);
  const auto b = make_pseudo_label(probs_of(1, 3, {0.999, 0.001, 0.04, 0.96, 0.9, 0.1}), 0.95);
  CHECK(unlabeled_loss<double>({s}, {fp}, {a}, 0.5).item() == unlabeled_loss<double>({s}, {fp}, {b}, 0.5).item());
}

TEST_CASE("pseudo-labels carry no gradient back to the weak stream") {
  const TD logits = TD::parameter(probs_of(1, 2, {2, 0, 0, 3}));
  const TD weak = softmax_channels(logits);
  const auto pl = make_pseudo_label(weak.value(), 0.5);
  const TD strong = TD::parameter(probs_of(1, 2, {0.6, 0.4, 0.3, 0.7}));
  backward(unlabeled_loss<double>({strong}, {strong}, {pl}, 0.5));
  CHECK(strong.has_grad());
  CHECK_FALSE(logits.has_grad());
}

TEST_CASE("phase one leaves the pixel decoder without gradient") {
  SynthConfig sc;
  sc.count = 8;
  sc.height = sc.width = 16;
  const Corpus corpus = synth_generate(sc);
  const TrainData data = make_train_data(corpus, make_split(corpus, 4, 1));
  TrainConfig config;
  config.toggles = LossToggles{true, false, false, false};
  config.batch = 2;
  auto params = init_params<double>(config.net, 3);
  PrototypeMemory<double> memory(config.net.num_classes, config.net.feat_dim, config.alpha);
  const auto prepared = prepare_iteration(config, data, 0);
  CHECK_FALSE(prepared.has_two);
  const auto obj = compute_objective(params, prepared, config, memory);
  backward(obj.total);
  CHECK(params.enc1_w.has_grad());
  CHECK(params.sed_cls_w.has_grad());
  CHECK_FALSE(params.pid_w.has_grad());
  CHECK_FALSE(params.pid_b.has_grad());
  for (const auto& h : params.heads) CHECK_FALSE(h.has_grad());
  CHECK(obj.report.pixel == 0.0);
  CHECK(obj.report.feature == 0.0);
  CHECK(obj.report.semantic == 0.0);
}

TEST_CASE("phase one losses agree with finite differences") {
  for (const auto& r : run_oracles("phase1")) {
    INFO(r.name);
    CHECK(r.check.max_rel_error < kGradTolerance);
  }
}
