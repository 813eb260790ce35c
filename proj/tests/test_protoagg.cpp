#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskseg/oracles.hpp"
#include "maskseg/protoagg.hpp"

using namespace maskseg;
using TD = Tensor<double>;

namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// 1 x 2 x 2 features: an orthogonal and an antiparallel vector to [1, 0].
TD two_positions() { return TD::parameter(NdArray<double>({1, 2, 2}, {0, 1, -1, 0})); }

}  // namespace

TEST_CASE("region sets split each class by the mask and drop excluded pixels") {
  LabelMap y(8, 8);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) y.at(i, j) = static_cast<std::uint8_t>((i / 4) * 2 + j / 4);
  }
  const ClassMaps maps = build_class_maps(y, 4, 4, 3, 4);
  const std::vector<std::uint8_t> none(64, 0);

  const RegionSets open = compute_region_sets(maps, Mask::all_visible(8, 8), none);
  for (int c = 0; c < 4; ++c) {
    CHECK(open.masked[c].empty());
    CHECK(open.visible[c].size() == 4u);
  }

  Mask closed = Mask::all_visible(8, 8);
  std::fill(closed.visible.begin(), closed.visible.end(), 0);
  const RegionSets hidden = compute_region_sets(maps, closed, none);
  for (int c = 0; c < 4; ++c) {
    CHECK(hidden.visible[c].empty());
    CHECK(hidden.masked[c].size() == 4u);
  }

  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng = make_rng(1, {s});
    const Mask m = sample_mask(8, 8, MaskSpec{2, 0.5}, rng);
    LabelMap with_ignore = y;
    with_ignore.labels[s % 64] = kIgnoreLabel;
    std::vector<std::uint8_t> padded(64, 0);
    padded[(s * 7 + 3) % 64] = 1;
    const auto excluded = exclusion_map(8, 8, &with_ignore, &padded);
    const RegionSets r = compute_region_sets(maps, m, excluded);
    const auto usable = resize_nearest(excluded, 8, 8, 4, 4);
    for (int c = 0; c < 4; ++c) {
      std::size_t available = 0;
      for (int p = 0; p < 16; ++p) available += maps.assignment.labels[p] == c && !usable[p] ? 1 : 0;
      CHECK(r.visible[c].size() + r.masked[c].size() == available);
      for (int p : r.visible[c]) CHECK(maps.assignment.labels[p] == c);
      for (int p : r.masked[c]) CHECK(maps.assignment.labels[p] == c);
    }
  }
}

TEST_CASE("exclusion map marks ignore labels and padding") {
  LabelMap y(1, 3);
  y.labels = {0, kIgnoreLabel, 1};
  const std::vector<std::uint8_t> padded{0, 0, 1};
  CHECK(exclusion_map(1, 3, &y, &padded) == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(exclusion_map(1, 3, nullptr, nullptr) == std::vector<std::uint8_t>{0, 0, 0});
  CHECK_THROWS_AS(exclusion_map(2, 3, &y, nullptr), std::invalid_argument);
}

TEST_CASE("prototypes are confidence-weighted means") {
  const NdArray<double> fea({1, 2, 2}, {1, 0, 0, 1});
  const std::vector<double> conf{1, 3};
  CHECK(*compute_prototype<double>(fea, conf, {0, 1}) == std::vector<double>{0.25, 0.75});
  const std::vector<double> flat{0.7, 0.7};
  const auto m = *compute_prototype<double>(fea, flat, {0, 1});
  CHECK(m[0] == doctest::Approx(0.5));
  CHECK(m[1] == doctest::Approx(0.5));
  CHECK(*compute_prototype<double>(fea, conf, {1}) == std::vector<double>{0, 1});
  CHECK_FALSE(compute_prototype<double>(fea, conf, {}).has_value());
}

TEST_CASE("moving-average memory") {
  PrototypeMemory<double> mem(2, 2, 0.99);
  CHECK_FALSE(mem.initialized(0));
  CHECK(vec(mem.prototype(0)) == std::vector<double>{0, 0});
  const std::vector<double> v{1, 0};
  ema_update(mem, 0, std::span<const double>(v));
  CHECK(mem.initialized(0));
  CHECK_FALSE(mem.initialized(1));
  CHECK(mem.prototype(0)[0] == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(mem.prototype(0)[1] == 0.0);

  PrototypeMemory<double> instant(1, 2, 0.0);
  const std::vector<double> w{0.3, -2};
  instant.update(0, w);
  CHECK(vec(instant.prototype(0)) == w);

  PrototypeMemory<double> series(1, 3, 0.99);
  const std::vector<double> c{0.5, -1.25, 2};
  for (int t = 0; t < 10; ++t) series.update(0, c);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(series.prototype(0)[j] - (1 - std::pow(0.99, 10)) * c[j]) < 1e-12);

  CHECK_THROWS_AS(PrototypeMemory<double>(2, 2, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(mem.update(2, v), std::out_of_range);
  const std::vector<double> bad{NAN, 0};
  CHECK_THROWS_AS(mem.update(0, bad), std::invalid_argument);
  CHECK_THROWS_AS(mem.update(0, std::vector<double>{1}), std::invalid_argument);
}

TEST_CASE("cosine objective values") {
  const std::vector<double> v{1, 0}, same{3, 0}, orth{0, 2}, anti{-1, 0}, zero{0, 0};
  CHECK(cos_loss<double>(same, v, 10) == 0.0);
  CHECK(cos_loss<double>(orth, v, 10) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(cos_loss<double>(anti, v, 10) == doctest::Approx(0.2).epsilon(1e-15));
  const std::vector<double> z{0.3, -0.7}, z5{1.5, -3.5};
  CHECK(cos_loss<double>(z5, v, 10) == doctest::Approx(cos_loss<double>(z, v, 10)).epsilon(1e-15));
  CHECK_THROWS_AS(cos_loss<double>(zero, v, 10), std::invalid_argument);
}

TEST_CASE("aggregation loss is a confidence-weighted mean over masked positions") {
  const std::vector<double> v{1, 0};
  const TD aligned = TD::parameter(NdArray<double>({1, 2, 2}, {2, 0, 5, 0}));
  const std::vector<double> equal{1, 1}, skew{3, 1};
  CHECK(aggregation_loss<double>(aligned, equal, v, {0, 1}, 10).item() == 0.0);
  CHECK(aggregation_loss<double>(two_positions(), equal, v, {0, 1}, 10).item() == doctest::Approx(0.15).epsilon(1e-14));
  CHECK(aggregation_loss<double>(two_positions(), skew, v, {0, 1}, 10).item() == doctest::Approx(0.125).epsilon(1e-14));

  // A zero vector is skipped together with its confidence.
  const TD with_zero = TD::parameter(NdArray<double>({1, 2, 2}, {0, 1, 0, 0}));
  CHECK(aggregation_loss<double>(with_zero, skew, v, {0, 1}, 10).item() == doctest::Approx(0.1).epsilon(1e-14));
  const TD all_zero = TD::parameter(NdArray<double>({1, 2, 2}));
  CHECK_THROWS_AS(aggregation_loss<double>(all_zero, skew, v, {0, 1}, 10), std::invalid_argument);
}

TEST_CASE("feature loss averages active classes and skips empty or uninitialized ones") {
  const std::vector<double> v{1, 0};
  PrototypeMemory<double> mem(3, 2, 0.0);
  mem.update(0, v);
  mem.update(2, std::vector<double>{0, 1});

  auto stream = [](const TD& fea, std::vector<int> masked0, std::vector<int> masked1) {
    FeatureStream<double> s;
    for (int c = 0; c < 3; ++c) s.grouped.groups.push_back(fea);
    s.confidence = {1, 1};
    s.regions.height = 1;
    s.regions.width = 2;
    s.regions.visible.assign(3, {});
    s.regions.masked = {std::move(masked0), std::move(masked1), {}};
    return s;
  };

  CHECK(mim_feature_loss<double>({stream(two_positions(), {}, {})}, mem, 0.05, 10).item() == 0.0);
  CHECK(mim_feature_loss<double>({}, mem, 0.05, 10).item() == 0.0);

  // Class 0 alone: a = 0.15.
  CHECK(mim_feature_loss<double>({stream(two_positions(), {0, 1}, {})}, mem, 0.05, 10).item() ==
        doctest::Approx(0.05 * 0.15).epsilon(1e-14));
  // Class 1 has masked positions but no prototype yet, so it does not count.
  CHECK(mim_feature_loss<double>({stream(two_positions(), {0, 1}, {0, 1})}, mem, 0.05, 10).item() ==
        doctest::Approx(0.05 * 0.15).epsilon(1e-14));
  // Positions of one class from two streams pool into one weighted mean.
  CHECK(mim_feature_loss<double>({stream(two_positions(), {0}, {}), stream(two_positions(), {1}, {})}, mem, 0.05, 10)
            .item() == doctest::Approx(0.05 * 0.15).epsilon(1e-14));
}

TEST_CASE("batch prototypes pool visible positions across streams") {
  FeatureStream<double> a, b;
  const TD fa = TD::constant(NdArray<double>({1, 2, 2}, {1, 0, 0, 0}));
  const TD fb = TD::constant(NdArray<double>({1, 2, 2}, {0, 0, 0, 1}));
  a.grouped.groups = {fa, fa};
  b.grouped.groups = {fb, fb};
  a.confidence = {1, 1};
  b.confidence = {1, 3};
  a.regions.visible = {{0}, {}};
  b.regions.visible = {{1}, {}};
  a.regions.masked = b.regions.masked = {{}, {}};
  const auto protos = batch_prototypes<double>({a, b}, 2);
  CHECK(*protos[0] == std::vector<double>{0.25, 0.75});
  CHECK_FALSE(protos[1].has_value());
}

TEST_CASE("feature aggregation gradients agree with finite differences") {
  for (const auto& r : run_oracles("protoagg")) {
    INFO(r.name);
    CHECK(r.check.max_rel_error < kGradTolerance);
  }
}
