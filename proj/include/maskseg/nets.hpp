#pragma once

// Toy segmentation network: shared encoder, semantic decoder, pixel trunk
// and one bias-free reconstruction head per class.
//
//   encoder:          conv3x3/2 + relu -> conv3x3/2 + relu      (H/4 x W/4 x enc_dim)
//   semantic decoder: conv3x3 + relu -> conv1x1 to C -> nearest x4
//   pixel trunk:      conv3x3 + relu                            (H/4 x W/4 x feat_dim)
//   heads[c]:         conv kxk, no bias, feat_dim -> D, nearest x4

#include <cstdint>
#include <string>
#include <vector>

#include "maskseg/ops.hpp"
#include "maskseg/tensor.hpp"

namespace maskseg {

struct NetConfig {
  int in_channels = 3;
  int num_classes = 4;
  int enc_hidden = 16;
  int enc_dim = 32;
  int dec_dim = 32;
  int feat_dim = 32;
  int head_kernel = 3;
  bool trunk_bias = true;

  bool operator==(const NetConfig&) const = default;
};

void validate(const NetConfig& config);

// Closed-form parameter count of the architecture above.
std::size_t expected_parameter_count(const NetConfig& config);

enum class ParamGroup {
  kMain,   // encoder + semantic decoder: poly schedule
  kPixel,  // pixel trunk + heads: constant rate
};

template <typename T>
struct SegNetParams {
  NetConfig config;
  Tensor<T> enc1_w, enc1_b;
  Tensor<T> enc2_w, enc2_b;
  Tensor<T> sed_w, sed_b;
  Tensor<T> sed_cls_w, sed_cls_b;
  Tensor<T> pid_w, pid_b;  // pid_b undefined when trunk_bias is off
  std::vector<Tensor<T>> heads;

  struct Entry {
    std::string name;
    Tensor<T>* tensor;
    ParamGroup group;
    bool is_weight;  // conv kernels receive weight decay, biases do not
  };
  std::vector<Entry> entries();
  std::vector<Tensor<T>> tensors() const;
  std::size_t parameter_count() const;

  template <typename U>
  SegNetParams<U> cast() const;

  // Fresh parameter tensors holding copies of the values.
  SegNetParams clone() const;
};

// Kaiming-uniform weights (bound sqrt(6 / fan_in)) and zero biases. Every
// tensor, and in particular every head, draws from its own sub-stream.
template <typename T>
SegNetParams<T> init_params(const NetConfig& config, std::uint64_t seed);

template <typename T>
Tensor<T> encode(const SegNetParams<T>& params, const Tensor<T>& image,
                 const ChannelKeep* perturb = nullptr);

template <typename T>
struct EncodeResult {
  Tensor<T> features;
  ChannelKeep keep;
};

// Encoder output with fresh channel dropout; returns the realization so a
// paired stream can reuse it.
template <typename T>
EncodeResult<T> encode_perturbed(const SegNetParams<T>& params, const Tensor<T>& image,
                                 double drop_prob, Rng& rng);

template <typename T>
Tensor<T> semantic_decode(const SegNetParams<T>& params, const Tensor<T>& enc, int height,
                          int width);

template <typename T>
Tensor<T> pixel_trunk(const SegNetParams<T>& params, const Tensor<T>& enc);

// Head_c applied to a feature map, upsampled to height x width.
template <typename T>
Tensor<T> head_apply(const SegNetParams<T>& params, int cls, const Tensor<T>& fea, int height,
                     int width);

template <typename T>
struct ForwardBundle {
  Tensor<T> enc;
  Tensor<T> fea;  // undefined unless the pixel branch was requested
  Tensor<T> logits;
  Tensor<T> probs;
};

template <typename T>
ForwardBundle<T> forward(const SegNetParams<T>& params, const Tensor<T>& image,
                         const ChannelKeep* perturb, bool with_pixel);

}  // namespace maskseg
