#include "maskseg/oracles.hpp"

#include <functional>
#include <stdexcept>

#include "maskseg/cwmim.hpp"
#include "maskseg/phase1.hpp"
#include "maskseg/protoagg.hpp"
#include "maskseg/semmim.hpp"

namespace maskseg {

namespace {

using D = double;
using TD = Tensor<D>;

TD random_param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  NdArray<D> a(std::move(shape));
  for (D& v : a.data) v = uniform(rng, lo, hi);
  return TD::parameter(std::move(a));
}

NdArray<D> random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  NdArray<D> a(std::move(shape));
  for (D& v : a.data) v = uniform(rng, lo, hi);
  return a;
}

LabelMap random_labels(int h, int w, int classes, Rng& rng, bool with_ignore) {
  LabelMap m(h, w);
  std::uniform_int_distribution<int> pick(0, classes - 1);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(pick(rng));
  if (with_ignore) m.labels[1] = kIgnoreLabel;
  return m;
}

struct Case {
  const char* module;
  const char* name;
  std::function<OracleResult(std::uint64_t)> run;
};

OracleResult check(const char* module, const char* name, const std::function<TD()>& f, std::vector<TD> inputs) {
  return {module, name, finite_diff_check(f, inputs)};
}

std::vector<Case> cases() {
  std::vector<Case> out;
  auto reg = [&](const char* module, const char* name, std::function<OracleResult(std::uint64_t)> run) {
    out.push_back({module, name, std::move(run)});
  };

  reg("tensorkit", "conv2d_stride1_bias", [](std::uint64_t s) {
    Rng r(s);
    TD x = random_param({5, 4, 3}, r), k = random_param({3, 3, 3, 2}, r), b = random_param({2}, r);
    Rng pr(s + 1);
    auto weights = random_array({5, 4, 2}, pr);
    return check("tensorkit", "conv2d_stride1_bias",
                 [=] { return weighted_sum(conv2d(x, k, 1, 1, &b), weights); }, {x, k, b});
  });
  reg("tensorkit", "conv2d_stride2", [](std::uint64_t s) {
    Rng r(s);
    TD x = random_param({6, 6, 2}, r), k = random_param({3, 3, 2, 3}, r);
    Rng pr(s + 1);
    auto weights = random_array({3, 3, 3}, pr);
    return check("tensorkit", "conv2d_stride2", [=] { return weighted_sum(conv2d(x, k, 2, 1), weights); }, {x, k});
  });
  reg("tensorkit", "relu", [](std::uint64_t s) {
    Rng r(s);
    TD x = random_param({4, 4, 2}, r);
    auto weights = random_array({4, 4, 2}, r);
    return check("tensorkit", "relu", [=] { return weighted_sum(relu(x), weights); }, {x});
  });
  reg("tensorkit", "add_sub_mul_scale", [](std::uint64_t s) {
    Rng r(s);
    TD a = random_param({3, 3, 2}, r), b = random_param({3, 3, 2}, r);
    auto weights = random_array({3, 3, 2}, r);
    return check("tensorkit", "add_sub_mul_scale",
                 [=] { return weighted_sum(scale(mul(add(a, b), sub(a, b)), 0.7), weights); }, {a, b});
  });
  reg("tensorkit", "add_n_sum_mean", [](std::uint64_t s) {
    Rng r(s);
    TD a = random_param({2, 3, 2}, r), b = random_param({2, 3, 2}, r), c = random_param({2, 3, 2}, r);
    return check("tensorkit", "add_n_sum_mean",
                 [=] { return add(sum(mul(add_n<D>({a, b, c}), a)), mean(mul(b, c))); }, {a, b, c});
  });
  reg("tensorkit", "softmax_cross_entropy", [](std::uint64_t s) {
    Rng r(s);
    TD logits = random_param({4, 3, 4}, r, -2.0, 2.0);
    const LabelMap y = random_labels(4, 3, 4, r, true);
    return check("tensorkit", "softmax_cross_entropy", [=] {
      const TD p = softmax_channels(logits);
      return add(cross_entropy(p, y), cross_entropy(p, y, CeReduction::kMeanAll));
    }, {logits});
  });
  reg("tensorkit", "mse", [](std::uint64_t s) {
    Rng r(s);
    TD a = random_param({4, 4, 3}, r), b = random_param({4, 4, 3}, r);
    return check("tensorkit", "mse", [=] { return mse(a, b); }, {a, b});
  });
  reg("tensorkit", "nearest_resize", [](std::uint64_t s) {
    Rng r(s);
    TD x = random_param({2, 3, 2}, r);
    auto weights = random_array({8, 12, 2}, r);
    return check("tensorkit", "nearest_resize", [=] { return weighted_sum(nearest_resize(x, 8, 12), weights); },
                 {x});
  });
  reg("tensorkit", "channel_keep", [](std::uint64_t s) {
    Rng r(s);
    TD x = random_param({3, 3, 6}, r);
    auto weights = random_array({3, 3, 6}, r);
    const ChannelKeep keep = sample_channel_keep(6, 0.5, r);
    return check("tensorkit", "channel_keep", [=] { return weighted_sum(apply_channel_keep(x, keep), weights); },
                 {x});
  });
  reg("tensorkit", "prototype_cosine", [](std::uint64_t s) {
    Rng r(s);
    TD x = random_param({3, 4, 5}, r);
    const std::vector<D> proto = random_array({5}, r).data;
    auto weights = random_array({3, 4, 1}, r, 0.0, 1.0);
    return check("tensorkit", "prototype_cosine",
                 [=] { return weighted_sum(prototype_cosine_loss_map<D>(x, proto, 10.0), weights); }, {x});
  });

  reg("nets", "semantic_branch", [](std::uint64_t s) {
    NetConfig nc{3, 4, 4, 6, 6, 4, 3, true};
    SegNetParams<D> p = init_params<D>(nc, s);
    Rng r(s + 1);
    const TD image = TD::constant(random_array({8, 8, 3}, r, 0.0, 1.0));
    const LabelMap y = random_labels(8, 8, 4, r, true);
    return check("nets", "semantic_branch",
                 [=] { return cross_entropy(forward(p, image, nullptr, false).probs, y); }, p.tensors());
  });
  reg("nets", "pixel_branch", [](std::uint64_t s) {
    NetConfig nc{3, 4, 4, 6, 6, 4, 3, true};
    SegNetParams<D> p = init_params<D>(nc, s);
    Rng r(s + 1);
    const TD image = TD::constant(random_array({8, 8, 3}, r, 0.0, 1.0));
    const TD target = TD::constant(random_array({8, 8, 3}, r, 0.0, 1.0));
    return check("nets", "pixel_branch", [=] {
      const TD fea = pixel_trunk(p, encode(p, image));
      return mse(add(head_apply(p, 0, fea, 8, 8), head_apply(p, 2, fea, 8, 8)), target);
    }, p.tensors());
  });

  reg("phase1", "supervised_and_unlabeled", [](std::uint64_t s) {
    Rng r(s);
    std::vector<TD> logits_l, logits_s, logits_fp;
    std::vector<LabelMap> labels;
    std::vector<PseudoLabel<D>> pseudo;
    for (int b = 0; b < 2; ++b) {
      logits_l.push_back(random_param({4, 4, 3}, r, -2.0, 2.0));
      logits_s.push_back(random_param({4, 4, 3}, r, -2.0, 2.0));
      logits_fp.push_back(random_param({4, 4, 3}, r, -2.0, 2.0));
      labels.push_back(random_labels(4, 4, 3, r, true));
      NdArray<D> weak = random_array({4, 4, 3}, r, 0.0, 1.0);
      pseudo.push_back(make_pseudo_label(weak, 0.4));
    }
    std::vector<TD> inputs = logits_l;
    inputs.insert(inputs.end(), logits_s.begin(), logits_s.end());
    inputs.insert(inputs.end(), logits_fp.begin(), logits_fp.end());
    return check("phase1", "supervised_and_unlabeled", [=] {
      std::vector<TD> pl, ps, pfp;
      for (int b = 0; b < 2; ++b) {
        pl.push_back(softmax_channels(logits_l[b]));
        ps.push_back(softmax_channels(logits_s[b]));
        pfp.push_back(softmax_channels(logits_fp[b]));
      }
      return add(supervised_loss(pl, labels), unlabeled_loss(ps, pfp, pseudo, 0.5));
    }, inputs);
  });

  reg("cwmim", "grouped_reconstruction", [](std::uint64_t s) {
    NetConfig nc{3, 4, 4, 6, 6, 4, 3, true};
    SegNetParams<D> p = init_params<D>(nc, s);
    Rng r(s + 1);
    TD fea = random_param({2, 2, 4}, r);
    const ClassMaps maps = build_class_maps(random_labels(8, 8, 4, r, false), 2, 2, 4, 4);
    std::vector<TD> inputs = p.heads;
    inputs.push_back(fea);
    const TD x = TD::constant(random_array({8, 8, 3}, r, 0.0, 1.0));
    return check("cwmim", "grouped_reconstruction", [=] {
      const TD rec = reconstruct(p, group_features(fea, maps), 8, 8);
      return mim_pixel_loss<D>({rec}, {x}, {rec}, {x}, {rec}, {x}, 1.0 / 3.0);
    }, inputs);
  });

  reg("protoagg", "feature_aggregation", [](std::uint64_t s) {
    Rng r(s);
    const int h = 4, w = 4, d = 5, classes = 3;
    std::vector<TD> feats;
    std::vector<ClassMaps> maps;
    std::vector<Mask> masks;
    std::vector<std::vector<D>> confs;
    for (int i = 0; i < 3; ++i) {
      feats.push_back(random_param({h, w, d}, r));
      maps.push_back(build_class_maps(random_labels(h, w, classes, r, false), h, w, d, classes));
      MaskSpec spec{1, 0.5};
      masks.push_back(sample_mask(h, w, spec, r));
      confs.push_back(random_array({h * w}, r, 0.1, 1.0).data);
    }
    PrototypeMemory<D> memory(classes, d, 0.9);
    for (int c = 0; c < classes; ++c) memory.update(c, random_array({d}, r).data);
    const std::vector<std::uint8_t> none(static_cast<std::size_t>(h) * w, 0);
    return check("protoagg", "feature_aggregation", [=] {
      std::vector<FeatureStream<D>> streams;
      for (int i = 0; i < 3; ++i) {
        FeatureStream<D> fs;
        fs.grouped = group_features(feats[i], maps[i]);
        fs.confidence = confs[i];
        fs.regions = compute_region_sets(maps[i], masks[i], none);
        streams.push_back(std::move(fs));
      }
      return mim_feature_loss(streams, memory, 0.05, 10.0);
    }, feats);
  });

  auto semantic = [](std::uint64_t s, SemanticLossKind kind) {
    Rng r(s);
    std::vector<TD> logits;
    std::vector<NdArray<D>> originals;
    for (int i = 0; i < 6; ++i) {
      logits.push_back(random_param({4, 4, 3}, r, -2.0, 2.0));
      NdArray<D> o = random_array({4, 4, 3}, r, 0.05, 1.0);
      for (std::size_t p = 0; p < o.size(); p += 3) {
        const D z = o.data[p] + o.data[p + 1] + o.data[p + 2];
        for (int c = 0; c < 3; ++c) o.data[p + c] /= z;
      }
      originals.push_back(std::move(o));
    }
    const SemanticTargets<D> targets = pseudo_label_for_semantic_targets<D>(
        {originals[0], originals[1]}, {originals[2], originals[3]}, {originals[4], originals[5]}, 0.95);
    return finite_diff_check([=] {
      std::vector<TD> p;
      for (const auto& l : logits) p.push_back(softmax_channels(l));
      return semantic_mim_loss<D>({p[0], p[1]}, {p[2], p[3]}, {p[4], p[5]}, targets, 0.1 / 3.0,
                                  SemanticOptions{kind, false});
    }, logits);
  };
  reg("semmim", "semantic_ce", [=](std::uint64_t s) {
    return OracleResult{"semmim", "semantic_ce", semantic(s, SemanticLossKind::kCrossEntropy)};
  });
  reg("semmim", "semantic_mse", [=](std::uint64_t s) {
    return OracleResult{"semmim", "semantic_mse", semantic(s, SemanticLossKind::kMse)};
  });

  reg("trainer", "composite_objective",
      [](std::uint64_t s) { return OracleResult{"trainer", "composite_objective", composite_gradcheck(s)}; });
  reg("trainer", "composite_objective_constant_fp", [](std::uint64_t s) {
    return OracleResult{"trainer", "composite_objective_constant_fp", composite_gradcheck(s, true)};
  });
  return out;
}

}  // namespace

std::vector<std::string> oracle_modules() {
  return {"tensorkit", "nets", "phase1", "cwmim", "protoagg", "semmim", "trainer"};
}

std::vector<OracleResult> run_oracles(const std::string& module, std::uint64_t seed) {
  if (!module.empty()) {
    bool known = false;
    for (const auto& m : oracle_modules()) known = known || m == module;
    if (!known) throw std::invalid_argument("unknown module '" + module + "'");
  }
  std::vector<OracleResult> out;
  for (const Case& c : cases()) {
    if (module.empty() || module == c.module) out.push_back(c.run(seed));
  }
  return out;
}

SegNetParams<D> composite_params(const TrainConfig& config) {
  SegNetParams<D> params = init_params<D>(config.net, config.seed_model);
  // Zero biases put every pre-activation over a masked (all-zero) patch
  // exactly on the ReLU kink, where central differences are meaningless.
  Rng r = make_rng(config.seed_model, {0xb1a5});
  for (auto& e : params.entries()) {
    if (e.is_weight) continue;
    for (D& v : e.tensor->mutable_value().data) v = uniform(r, -0.1, 0.1);
  }
  return params;
}

CompositeSetup composite_setup(std::uint64_t seed) {
  CompositeSetup s;
  TrainConfig& c = s.config;
  c.net = NetConfig{3, 4, 4, 6, 6, 4, 3, true};
  c.batch = 4;
  c.weak.max_pad = 1;
  // Every position passes the gate, so the consistency term is exercised.
  c.psi = 0.0;
  c.seed_model = seed;
  c.seed_data = seed + 1;
  c.seed_mask = seed + 2;
  c.iterations = 1;

  SynthConfig synth;
  synth.count = 8;
  synth.height = synth.width = 8;
  synth.num_classes = 4;
  synth.min_size = 0.3;
  synth.max_size = 0.6;
  // Photometric settings pinned so the check does not move with the
  // corpus defaults.
  synth.class_color_spread = 0.10;
  synth.illumination = 0.25;
  synth.color_cast = 0.08;
  synth.noise_std = 0.05;
  synth.seed = seed;
  s.corpus = synth_generate(synth);
  return s;
}

GradCheckResult composite_gradcheck(std::uint64_t seed, bool detach_fp_target) {
  CompositeSetup s = composite_setup(seed);
  s.config.detach_fp_target = detach_fp_target;
  s.data = make_train_data(s.corpus, make_split(s.corpus, 4, seed));
  const PreparedIteration prepared = prepare_iteration(s.config, s.data, 0);
  SegNetParams<D> params = composite_params(s.config);
  PrototypeMemory<D> memory(s.config.net.num_classes, s.config.net.feat_dim, s.config.alpha);
  auto frozen = std::make_shared<FrozenTargets<D>>();
  const TrainConfig cfg = s.config;
  return finite_diff_check(
      [&, frozen] { return compute_objective(params, prepared, cfg, memory, frozen.get()).total; },
      params.tensors());
}

}  // namespace maskseg
