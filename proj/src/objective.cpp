#include "maskseg/objective.hpp"

#include <stdexcept>

namespace maskseg {

TrainData make_train_data(const Corpus& corpus, const SplitManifest& split) {
  TrainData d;
  d.corpus = &corpus;
  d.split = split;
  for (const auto& id : split.labeled) d.labeled.push_back(static_cast<int>(corpus.index_of(id)));
  for (const auto& id : split.unlabeled) d.unlabeled.push_back(static_cast<int>(corpus.index_of(id)));
  return d;
}

bool phase_two_active(const TrainConfig& c) {
  return c.toggles.pixel || c.toggles.feature || c.toggles.semantic;
}

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
  kTagLabeledWeak = 1,
  kTagUnlabeledWeak = 2,
  kTagStrong = 3,
  kTagKeep = 4,
  kTagMaskLabeled = 5,
  kTagMaskStrong = 6,
  kTagMaskWeak = 7,
};

void fill_views(PhaseInputs& in, const TrainConfig& c, const TrainData& data, std::uint64_t draw, int phase,
                std::uint64_t iteration) {
  const Batch b = next_batch(data.split, c.batch, c.seed_data, draw);
  const Corpus& corpus = *data.corpus;
  const std::uint64_t ph = static_cast<std::uint64_t>(phase);
  for (int j = 0; j < c.batch; ++j) {
    const std::uint64_t uj = static_cast<std::uint64_t>(j);
    const int li = data.labeled[b.labeled[j]];
    const int ui = data.unlabeled[b.unlabeled[j]];
    in.labeled_ids.push_back(li);
    in.unlabeled_ids.push_back(ui);

    const Sample& ls = corpus.samples[li];
    Rng r1 = make_rng(c.seed_data, {iteration, ph, kTagLabeledWeak, uj});
    WeakResult<float> lw = weak_perturb(ls.image, &ls.label, r1, c.weak);
    in.labeled.push_back({std::move(lw.image), std::move(*lw.label), std::move(lw.padded)});

    const Sample& us = corpus.samples[ui];
    Rng r2 = make_rng(c.seed_data, {iteration, ph, kTagUnlabeledWeak, uj});
    WeakResult<float> uw = weak_perturb(us.image, nullptr, r2, c.weak);
    Rng r3 = make_rng(c.seed_data, {iteration, ph, kTagStrong, uj});
    NdArray<float> strong = strong_perturb(uw.image, r3, c.strong);
    in.unlabeled.push_back({std::move(uw.image), std::move(strong), std::move(uw.padded)});
  }
}

void fill_keeps(PhaseInputs& in, const TrainConfig& c, int phase, std::uint64_t iteration) {
  for (int j = 0; j < c.batch; ++j) {
    Rng r = make_rng(c.seed_mask, {iteration, static_cast<std::uint64_t>(phase), kTagKeep,
                                   static_cast<std::uint64_t>(j)});
    in.keeps.push_back(sample_channel_keep(c.net.enc_dim, c.feature_drop, r));
  }
}

}  // namespace

PreparedIteration prepare_iteration(const TrainConfig& c, const TrainData& data, int iteration) {
  if (!data.corpus) throw std::invalid_argument("prepare_iteration: no corpus");
  PreparedIteration p;
  p.iteration = iteration;
  const std::uint64_t it = static_cast<std::uint64_t>(iteration);
  fill_views(p.one, c, data, 2 * it, 1, it);
  fill_keeps(p.one, c, 1, it);
  p.has_two = phase_two_active(c);
  if (!p.has_two) return p;

  if (c.shared_batch) {
    p.two.labeled_ids = p.one.labeled_ids;
    p.two.unlabeled_ids = p.one.unlabeled_ids;
    p.two.labeled = p.one.labeled;
    p.two.unlabeled = p.one.unlabeled;
  } else {
    fill_views(p.two, c, data, 2 * it + 1, 2, it);
  }
  fill_keeps(p.two, c, 2, it);
  const int h = data.corpus->height, w = data.corpus->width;
  for (int j = 0; j < c.batch; ++j) {
    const std::uint64_t uj = static_cast<std::uint64_t>(j);
    Rng rl = make_rng(c.seed_mask, {it, 2, kTagMaskLabeled, uj});
    Rng rs = make_rng(c.seed_mask, {it, 2, kTagMaskStrong, uj});
    Rng rw = make_rng(c.seed_mask, {it, 2, kTagMaskWeak, uj});
    p.two.mask_labeled.push_back(sample_mask(h, w, c.mask, rl));
    p.two.mask_strong.push_back(sample_mask(h, w, c.mask, rs));
    p.two.mask_weak.push_back(sample_mask(h, w, c.mask, rw));
  }
  return p;
}

namespace {

template <typename T>
Tensor<T> image_tensor(const NdArray<float>& a) {
  return Tensor<T>::constant(a.template cast<T>());
}

template <typename T>
Tensor<T> probs_of(const SegNetParams<T>& params, const Tensor<T>& enc, int h, int w) {
  return softmax_channels(semantic_decode(params, enc, h, w));
}

// Per-position weights on the feature grid.
template <typename T>
std::vector<T> grid_confidence(const PseudoLabel<T>& pl, int h, int w, int fh, int fw, bool use_confidence) {
  if (!use_confidence) return std::vector<T>(static_cast<std::size_t>(fh) * fw, T(1));
  return resize_plane_nearest(pl.confidence, h, w, fh, fw);
}

template <typename T>
struct MaskedStream {
  Tensor<T> probs;
  Tensor<T> recon;
  FeatureStream<T> features;
};

template <typename T>
MaskedStream<T> masked_stream(const SegNetParams<T>& params, const TrainConfig& c, const NdArray<float>& image,
                              const Mask& mask, const ChannelKeep* keep, const PseudoLabel<T>& grouping,
                              const PseudoLabel<T>& confidence_source,
                              const std::vector<std::uint8_t>& excluded) {
  const int h = image.dim(0), w = image.dim(1);
  MaskedStream<T> s;
  Tensor<T> enc = encode(params, apply_mask(image_tensor<T>(image), mask), keep);
  if (c.toggles.semantic) s.probs = probs_of(params, enc, h, w);
  if (!(c.toggles.pixel || c.toggles.feature)) return s;
  Tensor<T> fea = pixel_trunk(params, enc);
  const int fh = fea.shape()[0], fw = fea.shape()[1];
  const ClassMaps maps = build_class_maps(grouping.label, fh, fw, fea.shape()[2], params.config.num_classes);
  s.features.grouped = group_features(fea, maps);
  if (c.toggles.pixel) {
    s.recon = c.classwise ? reconstruct(params, s.features.grouped, h, w) : reconstruct_plain(params, fea, h, w);
  }
  if (c.toggles.feature) {
    s.features.confidence = grid_confidence(confidence_source, h, w, fh, fw, c.use_confidence);
    s.features.regions = compute_region_sets(maps, mask, excluded);
  }
  return s;
}

template <typename T>
void phase_one(const SegNetParams<T>& params, const PhaseInputs& in, const TrainConfig& c, FrozenTargets<T>& ft,
               bool replay, LossTerms<T>& terms) {
  std::vector<Tensor<T>> probs_l;
  std::vector<LabelMap> labels;
  for (const auto& v : in.labeled) {
    const Tensor<T> x = image_tensor<T>(v.image);
    probs_l.push_back(forward(params, x, nullptr, false).probs);
    labels.push_back(v.label);
  }
  terms.supervised = supervised_loss(probs_l, labels);
  if (!c.toggles.unlabeled) return;

  std::vector<Tensor<T>> probs_s, probs_fp;
  for (std::size_t j = 0; j < in.unlabeled.size(); ++j) {
    const auto& v = in.unlabeled[j];
    const int h = v.weak.dim(0), w = v.weak.dim(1);
    // One encoder pass on the weak view feeds both the pseudo-label and the
    // feature-perturbed prediction.
    Tensor<T> enc_w = encode(params, image_tensor<T>(v.weak));
    if (!replay) {
      NoGradGuard ng;
      PseudoLabel<T> pl = make_pseudo_label(probs_of(params, enc_w, h, w).value(), c.psi);
      for (std::size_t p = 0; p < v.padded.size(); ++p) {
        if (v.padded[p]) pl.gate[p] = 0;
      }
      ft.weak_one.push_back(std::move(pl));
    }
    probs_fp.push_back(probs_of(params, apply_channel_keep(enc_w, in.keeps[j]), h, w));
    probs_s.push_back(forward(params, image_tensor<T>(v.strong), nullptr, false).probs);
  }
  terms.unlabeled = unlabeled_loss(probs_s, probs_fp, ft.weak_one, c.weights.lambda_u, c.gate_reduction);
}

template <typename T>
void phase_two(const SegNetParams<T>& params, const PhaseInputs& in, const TrainConfig& c, PrototypeMemory<T>& memory,
               FrozenTargets<T>& ft, bool replay, LossTerms<T>& terms) {
  const std::size_t b = in.labeled.size();
  const int num_classes = params.config.num_classes;
  const bool live_fp_target = c.toggles.pixel && !c.detach_fp_target;
  std::vector<Tensor<T>> live_targets;

  // Originals: pseudo-labels, confidences and the reconstruction target.
  for (std::size_t j = 0; j < b; ++j) {
    const auto& lv = in.labeled[j];
    const auto& uv = in.unlabeled[j];
    const int h = lv.image.dim(0), w = lv.image.dim(1);
    if (!replay) {
      NoGradGuard ng;
      const NdArray<T> pl = probs_of(params, encode(params, image_tensor<T>(lv.image)), h, w).value();
      const Tensor<T> enc_w = encode(params, image_tensor<T>(uv.weak));
      const NdArray<T> pw = probs_of(params, enc_w, h, w).value();
      const Tensor<T> enc_fp = apply_channel_keep(enc_w, in.keeps[j]);
      const NdArray<T> pfp = probs_of(params, enc_fp, h, w).value();
      const NdArray<T> ps = probs_of(params, encode(params, image_tensor<T>(uv.strong)), h, w).value();
      ft.labeled.push_back(make_pseudo_label(pl, c.psi));
      ft.weak.push_back(make_pseudo_label(pw, c.psi));
      ft.fp.push_back(make_pseudo_label(pfp, c.psi));
      ft.strong.push_back(make_pseudo_label(ps, c.psi));
      ft.labeled_probs.push_back(pl);
      ft.strong_probs.push_back(ps);
      ft.fp_probs.push_back(pfp);
      if (c.toggles.pixel && c.detach_fp_target) {
        ft.fp_target.push_back(
            build_fp_target_from_encoding(params, enc_fp.value(), ft.weak.back().label, h, w, c.classwise));
      }
    }
    if (live_fp_target) {
      // Same construction, left on the tape.
      Tensor<T> enc = encode(params, image_tensor<T>(uv.weak), &in.keeps[j]);
      Tensor<T> fea = pixel_trunk(params, enc);
      if (c.classwise) {
        const ClassMaps maps = build_class_maps(ft.weak[j].label, fea.shape()[0], fea.shape()[1], fea.shape()[2],
                                                num_classes);
        live_targets.push_back(reconstruct(params, group_features(fea, maps), h, w));
      } else {
        live_targets.push_back(reconstruct_plain(params, fea, h, w));
      }
    }
  }

  std::vector<MaskedStream<T>> ml, ms, mfp;
  for (std::size_t j = 0; j < b; ++j) {
    const auto& lv = in.labeled[j];
    const auto& uv = in.unlabeled[j];
    const int h = lv.image.dim(0), w = lv.image.dim(1);
    ml.push_back(masked_stream(params, c, lv.image, in.mask_labeled[j], nullptr, ft.labeled[j], ft.labeled[j],
                               exclusion_map(h, w, &lv.label, &lv.padded)));
    const auto unl_excluded = exclusion_map(h, w, nullptr, &uv.padded);
    ms.push_back(masked_stream(params, c, uv.strong, in.mask_strong[j], nullptr, ft.weak[j], ft.strong[j],
                               unl_excluded));
    mfp.push_back(masked_stream(params, c, uv.weak, in.mask_weak[j], &in.keeps[j], ft.weak[j], ft.fp[j],
                                unl_excluded));
  }

  if (c.toggles.pixel) {
    std::vector<Tensor<T>> rl, xl, rs, xs, rfp, xfp;
    for (std::size_t j = 0; j < b; ++j) {
      rl.push_back(ml[j].recon);
      xl.push_back(image_tensor<T>(in.labeled[j].image));
      rs.push_back(ms[j].recon);
      xs.push_back(image_tensor<T>(in.unlabeled[j].strong));
      rfp.push_back(mfp[j].recon);
      xfp.push_back(live_fp_target ? live_targets[j] : Tensor<T>::constant(ft.fp_target[j]));
    }
    terms.pixel = mim_pixel_loss(rl, xl, rs, xs, rfp, xfp, c.weights.lambda_mp);
  }

  if (c.toggles.feature) {
    if (!replay) {
      // Update first, then use: prototypes come from the visible part of
      // the labeled masked stream.
      std::vector<FeatureStream<T>> labeled_streams;
      for (auto& s : ml) labeled_streams.push_back(s.features);
      const auto protos = batch_prototypes(labeled_streams, num_classes);
      if (!c.use_memory) memory = PrototypeMemory<T>(num_classes, params.config.feat_dim, 0.0);
      for (int cls = 0; cls < num_classes; ++cls) {
        if (protos[cls]) memory.update(cls, *protos[cls]);
      }
      ft.memory = memory;
    }
    std::vector<FeatureStream<T>> all;
    for (auto* group : {&ml, &ms, &mfp}) {
      for (auto& s : *group) all.push_back(s.features);
    }
    terms.feature = mim_feature_loss(all, ft.memory, c.weights.lambda_mf, c.tau);
  }

  if (c.toggles.semantic) {
    SemanticTargets<T> targets;
    targets.labeled = ft.labeled;
    targets.strong = ft.strong;
    targets.fp = ft.fp;
    targets.labeled_probs = ft.labeled_probs;
    targets.strong_probs = ft.strong_probs;
    targets.fp_probs = ft.fp_probs;
    std::vector<Tensor<T>> pl, ps, pfp;
    for (std::size_t j = 0; j < b; ++j) {
      pl.push_back(ml[j].probs);
      ps.push_back(ms[j].probs);
      pfp.push_back(mfp[j].probs);
    }
    terms.semantic = semantic_mim_loss(pl, ps, pfp, targets, c.weights.lambda_ms,
                                       SemanticOptions{c.semantic_loss, c.semantic_gated});
  }
}

}  // namespace

template <typename T>
Objective<T> compute_objective(const SegNetParams<T>& params, const PreparedIteration& prepared,
                               const TrainConfig& config, PrototypeMemory<T>& memory, FrozenTargets<T>* frozen) {
  FrozenTargets<T> local;
  FrozenTargets<T>& ft = frozen ? *frozen : local;
  const bool replay = ft.filled;
  Objective<T> out;
  phase_one(params, prepared.one, config, ft, replay, out.terms);
  if (prepared.has_two && phase_two_active(config)) phase_two(params, prepared.two, config, memory, ft, replay, out.terms);
  ft.filled = true;
  out.total = total_loss(out.terms, config.weights, config.toggles);
  out.report = report_of(out.terms, out.total);
  return out;
}

template Objective<float> compute_objective(const SegNetParams<float>&, const PreparedIteration&, const TrainConfig&,
                                            PrototypeMemory<float>&, FrozenTargets<float>*);
template Objective<double> compute_objective(const SegNetParams<double>&, const PreparedIteration&,
                                             const TrainConfig&, PrototypeMemory<double>&, FrozenTargets<double>*);

}  // namespace maskseg
