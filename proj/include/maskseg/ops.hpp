#pragma once

// Differentiable operations over HWC tensors. Every op accepts float or
// double; training uses float, the finite-difference oracle uses double.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "maskseg/label_map.hpp"
#include "maskseg/rng.hpp"
#include "maskseg/tensor.hpp"

namespace maskseg {

// Input H x W x Din, kernel k x k x Din x Dout (Dout fastest), optional bias
// of Dout. Output extents are (H + 2 pad - k) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int pad,
                 const Tensor<T>* bias = nullptr);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// Sum of equally shaped tensors, accumulated left to right.
template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& terms);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Sum of x * weights for a constant weight array of the same shape.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const NdArray<T>& weights);

// Softmax over the last (channel) axis of an H x W x C tensor.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits);

enum class CeReduction {
  kMeanValid,  // divide by the number of non-ignored positions
  kMeanAll,    // divide by H * W; ignored positions still contribute nothing
};

// Mean negative log-likelihood of `probs` (H x W x C distributions) at the
// target classes. Ignored positions contribute nothing; an all-ignored map
// yields 0 with zero gradient.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, const LabelMap& target,
                        CeReduction reduction = CeReduction::kMeanValid);

template <typename T>
Tensor<T> mse(const Tensor<T>& prediction, const Tensor<T>& target);

template <typename T>
Tensor<T> nearest_resize(const Tensor<T>& x, int height, int width);

// Per-channel keep decisions of one dropout draw. Surviving channels are
// scaled by 1 / (1 - p).
struct ChannelKeep {
  std::vector<std::uint8_t> keep;
  double drop_prob = 0.0;

  double scale() const { return 1.0 / (1.0 - drop_prob); }
  bool operator==(const ChannelKeep&) const = default;
};

ChannelKeep sample_channel_keep(int channels, double drop_prob, Rng& rng);

template <typename T>
Tensor<T> apply_channel_keep(const Tensor<T>& x, const ChannelKeep& keep);

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  ChannelKeep keep;
};

template <typename T>
DropoutResult<T> channel_dropout(const Tensor<T>& x, double drop_prob, Rng& rng);

// Per-position (1 - cos(z, prototype)) / tau for an H x W x D feature map;
// output is H x W x 1. Positions whose feature vector has zero norm yield 0
// and pass no gradient. The prototype is a constant.
template <typename T>
Tensor<T> prototype_cosine_loss_map(const Tensor<T>& features, std::span<const T> prototype,
                                    T tau);

// Argmax over channels, lowest index on ties.
template <typename T>
LabelMap argmax_channels(const NdArray<T>& probs);

// Per-position maximum over channels.
template <typename T>
std::vector<T> max_channels(const NdArray<T>& probs);

}  // namespace maskseg
