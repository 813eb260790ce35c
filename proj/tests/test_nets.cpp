#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskseg/nets.hpp"
#include "maskseg/oracles.hpp"

using namespace maskseg;
using TD = Tensor<double>;

namespace {

NdArray<double> ramp_image(int h, int w, int d) {
  NdArray<double> x({h, w, d});
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = std::sin(0.37 * static_cast<double>(i)) * 0.5 + 0.5;
  return x;
}

}  // namespace

TEST_CASE("init_params is deterministic and gives every head its own draw") {
  const NetConfig c;
  auto a = init_params<double>(c, 11);
  auto b = init_params<double>(c, 11);
  const auto ta = a.tensors(), tb = b.tensors();
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].value().data == tb[i].value().data);
  for (int i = 0; i < c.num_classes; ++i) {
    for (int j = i + 1; j < c.num_classes; ++j) CHECK(a.heads[i].value().data != a.heads[j].value().data);
  }
  auto other = init_params<double>(c, 12);
  CHECK(other.enc1_w.value().data != a.enc1_w.value().data);
}

TEST_CASE("init_params draws weights at the fan-in scale") {
  const NetConfig c;
  auto p = init_params<double>(c, 3);
  const auto& w = p.enc2_w.value().data;
  REQUIRE(w.size() >= 1000);
  double m = 0, s = 0;
  for (double v : w) m += v;
  m /= static_cast<double>(w.size());
  for (double v : w) s += (v - m) * (v - m);
  const double sd = std::sqrt(s / static_cast<double>(w.size()));
  const double expected = std::sqrt(6.0 / (9.0 * c.enc_hidden)) / std::sqrt(3.0);
  CHECK(std::abs(sd - expected) < 0.2 * expected);
  for (double v : p.enc2_b.value().data) CHECK(v == 0.0);
}

TEST_CASE("parameter count matches the closed form") {
  for (NetConfig c : {NetConfig{}, NetConfig{3, 5, 8, 12, 10, 6, 1, false}, NetConfig{1, 2, 4, 4, 4, 4, 5, true}}) {
    auto p = init_params<float>(c, 1);
    CHECK(p.parameter_count() == expected_parameter_count(c));
  }
}

TEST_CASE("invalid network configurations are rejected") {
  NetConfig c;
  c.num_classes = 1;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = NetConfig{};
  c.feat_dim = 3;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = NetConfig{};
  c.head_kernel = 2;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
}

TEST_CASE("encode requires extents divisible by four and the configured channel count") {
  auto p = init_params<double>(NetConfig{}, 1);
  CHECK_THROWS_AS(encode(p, TD::constant(NdArray<double>({10, 8, 3}))), ShapeError);
  CHECK_THROWS_AS(encode(p, TD::constant(NdArray<double>({8, 8, 1}))), ShapeError);
  CHECK(encode(p, TD::constant(NdArray<double>({8, 12, 3}))).shape() == Shape{2, 3, 32});
}

TEST_CASE("feature perturbation: p = 0 is the identity and a reused keep drops the same channels") {
  auto p = init_params<double>(NetConfig{}, 2);
  const TD x = TD::constant(ramp_image(16, 16, 3));
  const TD plain = encode(p, x);
  CHECK(encode(p, x).value().data == plain.value().data);

  Rng rng0 = make_rng(5, {0});
  auto none = encode_perturbed(p, x, 0.0, rng0);
  CHECK(none.features.value().data == plain.value().data);

  Rng rng = make_rng(5, {1});
  auto first = encode_perturbed(p, x, 0.5, rng);
  const TD again = encode(p, x, &first.keep);
  CHECK(again.value().data == first.features.value().data);
  const int d = p.config.enc_dim;
  for (std::size_t i = 0; i < again.numel(); ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(d));
    const double want = first.keep.keep[c] ? plain.value().data[i] * 2.0 : 0.0;
    CHECK(again.value().data[i] == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("decoders and heads restore the input resolution") {
  NetConfig c;
  c.num_classes = 5;
  auto p = init_params<double>(c, 4);
  for (auto [h, w] : {std::pair{4, 4}, std::pair{8, 12}, std::pair{16, 4}}) {
    const TD x = TD::constant(ramp_image(h, w, 3));
    const TD enc = encode(p, x);
    CHECK(semantic_decode(p, enc, h, w).shape() == Shape{h, w, 5});
    const TD fea = pixel_trunk(p, enc);
    CHECK(fea.shape() == Shape{h / 4, w / 4, c.feat_dim});
    CHECK(head_apply(p, 4, fea, h, w).shape() == Shape{h, w, 3});
  }
}

TEST_CASE("a zero classifier yields uniform probabilities") {
  auto p = init_params<double>(NetConfig{}, 5);
  for (double& v : p.sed_cls_w.mutable_value().data) v = 0;
  auto out = forward(p, TD::constant(ramp_image(8, 8, 3)), nullptr, false);
  for (double v : out.probs.value().data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_FALSE(out.fea.defined());
}

TEST_CASE("a bias-free trunk maps a zero image to zero features") {
  NetConfig c;
  c.trunk_bias = false;
  auto p = init_params<double>(c, 6);
  CHECK_FALSE(p.pid_b.defined());
  auto out = forward(p, TD::constant(NdArray<double>({8, 8, 3})), nullptr, true);
  for (double v : out.fea.value().data) CHECK(v == 0.0);
}

TEST_CASE("heads are bias-free, validate the class index and honour a unit 1x1 kernel") {
  NetConfig c;
  c.head_kernel = 1;
  c.feat_dim = 4;
  auto p = init_params<double>(c, 7);
  const TD zero = TD::constant(NdArray<double>({2, 2, 4}));
  const TD out = head_apply(p, 0, zero, 8, 8);
  for (double v : out.value().data) CHECK(v == 0.0);
  CHECK_THROWS_AS(head_apply(p, 4, zero, 8, 8), std::out_of_range);
  CHECK_THROWS_AS(head_apply(p, -1, zero, 8, 8), std::out_of_range);

  auto& k = p.heads[2].mutable_value();
  std::fill(k.data.begin(), k.data.end(), 0.0);
  for (int j = 0; j < 3; ++j) k.data[static_cast<std::size_t>(j) * 3 + j] = 1.0;
  NdArray<double> f({2, 2, 4});
  for (std::size_t i = 0; i < f.size(); ++i) f.data[i] = static_cast<double>(i) + 1;
  const TD r = head_apply(p, 2, TD::constant(f), 8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      for (int j = 0; j < 3; ++j) CHECK(r.value().at(y, x, j) == f.at(y / 4, x / 4, j));
    }
  }
}

TEST_CASE("a loss on one head's output reaches only that head") {
  auto p = init_params<double>(NetConfig{}, 8);
  const TD x = TD::constant(ramp_image(8, 8, 3));
  const TD fea = pixel_trunk(p, encode(p, x));
  backward(sum(head_apply(p, 1, fea, 8, 8)));
  for (int c = 0; c < 4; ++c) {
    if (c == 1) {
      CHECK(p.heads[c].has_grad());
    } else {
      CHECK_FALSE(p.heads[c].has_grad());
    }
  }
  CHECK_FALSE(p.sed_w.has_grad());
  CHECK(p.pid_w.has_grad());
}

TEST_CASE("float and double parameters convert without loss of the float values") {
  auto p = init_params<float>(NetConfig{}, 9);
  auto back = p.cast<double>().cast<float>();
  const auto a = p.tensors(), b = back.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value().data == b[i].value().data);
  auto copy = p.clone();
  copy.enc1_w.mutable_value().data[0] += 1.0f;
  CHECK(copy.enc1_w.value().data[0] != p.enc1_w.value().data[0]);
}

TEST_CASE("network gradients agree with finite differences") {
  for (const auto& r : run_oracles("nets")) {
    INFO(r.name);
    CHECK(r.check.max_rel_error < kGradTolerance);
  }
}
