#include "maskseg/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace maskseg {

void validate(const NetConfig& c) {
  if (c.num_classes < 2) throw std::invalid_argument("NetConfig: num_classes must be >= 2");
  if (c.num_classes > 254) throw std::invalid_argument("NetConfig: num_classes must be < 255");
  if (c.feat_dim < 4) throw std::invalid_argument("NetConfig: feat_dim must be >= 4");
  if (c.in_channels < 1 || c.enc_hidden < 1 || c.enc_dim < 1 || c.dec_dim < 1) {
    throw std::invalid_argument("NetConfig: channel widths must be positive");
  }
  if (c.head_kernel < 1 || c.head_kernel % 2 == 0) {
    throw std::invalid_argument("NetConfig: head_kernel must be odd and positive");
  }
}

std::size_t expected_parameter_count(const NetConfig& c) {
  const std::size_t d = c.in_channels, h = c.enc_hidden, e = c.enc_dim, s = c.dec_dim,
                    f = c.feat_dim, k = c.head_kernel, n = c.num_classes;
  return (9 * d * h + h) + (9 * h * e + e) + (9 * e * s + s) + (s * n + n) +
         (9 * e * f + (c.trunk_bias ? f : 0)) + n * k * k * f * d;
}

template <typename T>
std::vector<typename SegNetParams<T>::Entry> SegNetParams<T>::entries() {
  std::vector<Entry> out{
      {"encoder.conv1.weight", &enc1_w, ParamGroup::kMain, true},
      {"encoder.conv1.bias", &enc1_b, ParamGroup::kMain, false},
      {"encoder.conv2.weight", &enc2_w, ParamGroup::kMain, true},
      {"encoder.conv2.bias", &enc2_b, ParamGroup::kMain, false},
      {"semantic.conv.weight", &sed_w, ParamGroup::kMain, true},
      {"semantic.conv.bias", &sed_b, ParamGroup::kMain, false},
      {"semantic.classifier.weight", &sed_cls_w, ParamGroup::kMain, true},
      {"semantic.classifier.bias", &sed_cls_b, ParamGroup::kMain, false},
      {"pixel.trunk.weight", &pid_w, ParamGroup::kPixel, true},
  };
  if (config.trunk_bias) out.push_back({"pixel.trunk.bias", &pid_b, ParamGroup::kPixel, false});
  for (std::size_t c = 0; c < heads.size(); ++c) {
    out.push_back({"pixel.head" + std::to_string(c) + ".weight", &heads[c], ParamGroup::kPixel, true});
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> SegNetParams<T>::tensors() const {
  auto self = const_cast<SegNetParams*>(this)->entries();
  std::vector<Tensor<T>> out;
  for (auto& e : self) out.push_back(*e.tensor);
  return out;
}

template <typename T>
std::size_t SegNetParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto& t : tensors()) n += t.numel();
  return n;
}

template <typename T>
template <typename U>
SegNetParams<U> SegNetParams<T>::cast() const {
  SegNetParams<U> out;
  out.config = config;
  auto src = const_cast<SegNetParams*>(this)->entries();
  out.heads.resize(heads.size());
  auto dst = out.entries();
  for (std::size_t i = 0; i < src.size(); ++i) {
    *dst[i].tensor = Tensor<U>::parameter(src[i].tensor->value().template cast<U>());
  }
  return out;
}

template <typename T>
SegNetParams<T> SegNetParams<T>::clone() const {
  return cast<T>();
}

namespace {

template <typename T>
Tensor<T> kaiming(Shape shape, int fan_in, std::uint64_t seed) {
  Rng rng(seed);
  NdArray<T> a(std::move(shape));
  const double bound = std::sqrt(6.0 / fan_in);
  for (T& v : a.data) v = static_cast<T>(uniform(rng, -bound, bound));
  return Tensor<T>::parameter(std::move(a));
}

template <typename T>
Tensor<T> zeros_param(int n) {
  return Tensor<T>::parameter(NdArray<T>({n}));
}

}  // namespace

template <typename T>
SegNetParams<T> init_params(const NetConfig& c, std::uint64_t seed) {
  validate(c);
  SegNetParams<T> p;
  p.config = c;
  p.enc1_w = kaiming<T>({3, 3, c.in_channels, c.enc_hidden}, 9 * c.in_channels, derive_seed(seed, {1}));
  p.enc1_b = zeros_param<T>(c.enc_hidden);
  p.enc2_w = kaiming<T>({3, 3, c.enc_hidden, c.enc_dim}, 9 * c.enc_hidden, derive_seed(seed, {2}));
  p.enc2_b = zeros_param<T>(c.enc_dim);
  p.sed_w = kaiming<T>({3, 3, c.enc_dim, c.dec_dim}, 9 * c.enc_dim, derive_seed(seed, {3}));
  p.sed_b = zeros_param<T>(c.dec_dim);
  p.sed_cls_w = kaiming<T>({1, 1, c.dec_dim, c.num_classes}, c.dec_dim, derive_seed(seed, {4}));
  p.sed_cls_b = zeros_param<T>(c.num_classes);
  p.pid_w = kaiming<T>({3, 3, c.enc_dim, c.feat_dim}, 9 * c.enc_dim, derive_seed(seed, {5}));
  if (c.trunk_bias) p.pid_b = zeros_param<T>(c.feat_dim);
  const int k = c.head_kernel;
  for (int cls = 0; cls < c.num_classes; ++cls) {
    p.heads.push_back(kaiming<T>({k, k, c.feat_dim, c.in_channels}, k * k * c.feat_dim,
                                 derive_seed(seed, {100, static_cast<std::uint64_t>(cls)})));
  }
  return p;
}

template <typename T>
Tensor<T> encode(const SegNetParams<T>& p, const Tensor<T>& image, const ChannelKeep* perturb) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[2] != p.config.in_channels) {
    throw ShapeError("encode: expected H x W x " + std::to_string(p.config.in_channels) + " image, got " +
                     shape_str(s));
  }
  if (s[0] % 4 != 0 || s[1] % 4 != 0) {
    throw ShapeError("encode: image extents must be divisible by 4, got " + shape_str(s));
  }
  Tensor<T> h = relu(conv2d(image, p.enc1_w, 2, 1, &p.enc1_b));
  h = relu(conv2d(h, p.enc2_w, 2, 1, &p.enc2_b));
  if (perturb) h = apply_channel_keep(h, *perturb);
  return h;
}

template <typename T>
EncodeResult<T> encode_perturbed(const SegNetParams<T>& p, const Tensor<T>& image, double drop_prob,
                                 Rng& rng) {
  ChannelKeep keep = sample_channel_keep(p.config.enc_dim, drop_prob, rng);
  Tensor<T> f = encode(p, image, &keep);
  return {std::move(f), std::move(keep)};
}

template <typename T>
Tensor<T> semantic_decode(const SegNetParams<T>& p, const Tensor<T>& enc, int height, int width) {
  Tensor<T> h = relu(conv2d(enc, p.sed_w, 1, 1, &p.sed_b));
  // 1x1 classifier before the nearest upsample; both are per-pixel linear so
  // the order does not change the result.
  Tensor<T> logits = conv2d(h, p.sed_cls_w, 1, 0, &p.sed_cls_b);
  return nearest_resize(logits, height, width);
}

template <typename T>
Tensor<T> pixel_trunk(const SegNetParams<T>& p, const Tensor<T>& enc) {
  return relu(conv2d(enc, p.pid_w, 1, 1, p.config.trunk_bias ? &p.pid_b : nullptr));
}

template <typename T>
Tensor<T> head_apply(const SegNetParams<T>& p, int cls, const Tensor<T>& fea, int height, int width) {
  if (cls < 0 || cls >= static_cast<int>(p.heads.size())) {
    throw std::out_of_range("head_apply: class " + std::to_string(cls) + " outside [0, " +
                            std::to_string(p.heads.size()) + ")");
  }
  const int k = p.config.head_kernel;
  return nearest_resize(conv2d(fea, p.heads[cls], 1, k / 2), height, width);
}

template <typename T>
ForwardBundle<T> forward(const SegNetParams<T>& p, const Tensor<T>& image, const ChannelKeep* perturb,
                         bool with_pixel) {
  ForwardBundle<T> out;
  out.enc = encode(p, image, perturb);
  out.logits = semantic_decode(p, out.enc, image.shape()[0], image.shape()[1]);
  out.probs = softmax_channels(out.logits);
  if (with_pixel) out.fea = pixel_trunk(p, out.enc);
  return out;
}

#define MASKSEG_INSTANTIATE_NETS(T)                                                              \
  template struct SegNetParams<T>;                                                               \
  template SegNetParams<T> init_params<T>(const NetConfig&, std::uint64_t);                      \
  template Tensor<T> encode(const SegNetParams<T>&, const Tensor<T>&, const ChannelKeep*);        \
  template EncodeResult<T> encode_perturbed(const SegNetParams<T>&, const Tensor<T>&, double, Rng&); \
  template Tensor<T> semantic_decode(const SegNetParams<T>&, const Tensor<T>&, int, int);        \
  template Tensor<T> pixel_trunk(const SegNetParams<T>&, const Tensor<T>&);                      \
  template Tensor<T> head_apply(const SegNetParams<T>&, int, const Tensor<T>&, int, int);        \
  template ForwardBundle<T> forward(const SegNetParams<T>&, const Tensor<T>&, const ChannelKeep*, bool);

MASKSEG_INSTANTIATE_NETS(float)
MASKSEG_INSTANTIATE_NETS(double)

template SegNetParams<double> SegNetParams<float>::cast<double>() const;
template SegNetParams<float> SegNetParams<double>::cast<float>() const;

#undef MASKSEG_INSTANTIATE_NETS

}  // namespace maskseg
