#include "maskseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace maskseg {

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_rank3(const Shape& s, const char* op) {
  if (s.size() != 3) throw ShapeError(std::string(op) + ": expected H x W x C, got " + shape_str(s));
}

template <typename T>
constexpr T kProbFloor = T(1e-20);

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int pad,
                 const Tensor<T>* bias) {
  require_rank3(input.shape(), "conv2d");
  const Shape& ks = kernel.shape();
  if (ks.size() != 4 || ks[0] != ks[1]) {
    throw ShapeError("conv2d: kernel must be k x k x Din x Dout, got " + shape_str(ks));
  }
  const int k = ks[0];
  const int h = input.shape()[0], w = input.shape()[1], din = input.shape()[2];
  const int dout = ks[3];
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: need stride >= 1 and pad >= 0");
  if (ks[2] != din) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(ks[2]) + " input channels, input " +
                     shape_str(input.shape()) + " has " + std::to_string(din));
  }
  if (bias && bias->shape() != Shape{dout}) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias->shape()) + " does not match Dout " +
                     std::to_string(dout));
  }
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw ShapeError("conv2d: input " + shape_str(input.shape()) + " smaller than kernel");
  }
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;

  NdArray<T> out({ho, wo, dout});
  const T* __restrict x = input.value().data.data();
  const T* __restrict kw = kernel.value().data.data();
  T* __restrict o = out.data.data();
  if (bias) {
    const T* b = bias->value().data.data();
    for (int p = 0; p < ho * wo; ++p) std::copy(b, b + dout, o + static_cast<std::size_t>(p) * dout);
  }
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      T* orow = o + (static_cast<std::size_t>(oy) * wo + ox) * dout;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          const T* xin = x + (static_cast<std::size_t>(iy) * w + ix) * din;
          const T* wtap = kw + (static_cast<std::size_t>(ky) * k + kx) * din * dout;
          for (int ci = 0; ci < din; ++ci) {
            const T a = xin[ci];
            if (a == T(0)) continue;
            const T* wr = wtap + static_cast<std::size_t>(ci) * dout;
            for (int co = 0; co < dout; ++co) orow[co] += a * wr[co];
          }
        }
      }
    }
  }

  std::vector<Tensor<T>> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return Tensor<T>::from_op(
      "conv2d", std::move(out), std::move(inputs),
      [=](typename Tensor<T>::Node& self) {
        auto& in_node = *self.inputs[0];
        auto& k_node = *self.inputs[1];
        const T* g = self.grad.data.data();
        const T* xv = in_node.value.data.data();
        const T* kv = k_node.value.data.data();
        T* gx = in_node.requires_grad ? in_node.grad_buffer().data.data() : nullptr;
        T* gk = k_node.requires_grad ? k_node.grad_buffer().data.data() : nullptr;
        // Kernel transposed to k x k x Dout x Din so the input-gradient loop
        // runs over contiguous Din.
        std::vector<T> kt;
        if (gx) {
          kt.resize(k_node.value.size());
          for (int tap = 0; tap < k * k; ++tap) {
            const std::size_t base = static_cast<std::size_t>(tap) * din * dout;
            for (int ci = 0; ci < din; ++ci) {
              for (int co = 0; co < dout; ++co) {
                kt[base + static_cast<std::size_t>(co) * din + ci] =
                    kv[base + static_cast<std::size_t>(ci) * dout + co];
              }
            }
          }
        }
        if (has_bias && self.inputs[2]->requires_grad) {
          T* gb = self.inputs[2]->grad_buffer().data.data();
          for (int p = 0; p < ho * wo; ++p) {
            const T* gr = g + static_cast<std::size_t>(p) * dout;
            for (int co = 0; co < dout; ++co) gb[co] += gr[co];
          }
        }
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            const T* gr = g + (static_cast<std::size_t>(oy) * wo + ox) * dout;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= w) continue;
                const std::size_t in_off = (static_cast<std::size_t>(iy) * w + ix) * din;
                const std::size_t tap_off = (static_cast<std::size_t>(ky) * k + kx) * din * dout;
                if (gx) {
                  T* gxr = gx + in_off;
                  for (int co = 0; co < dout; ++co) {
                    const T gv = gr[co];
                    if (gv == T(0)) continue;
                    const T* ktr = kt.data() + tap_off + static_cast<std::size_t>(co) * din;
                    for (int ci = 0; ci < din; ++ci) gxr[ci] += gv * ktr[ci];
                  }
                }
                if (gk) {
                  for (int ci = 0; ci < din; ++ci) {
                    const T a = xv[in_off + ci];
                    if (a == T(0)) continue;
                    T* gkr = gk + tap_off + static_cast<std::size_t>(ci) * dout;
                    for (int co = 0; co < dout; ++co) gkr[co] += a * gr[co];
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  NdArray<T> out = x.value();
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  return Tensor<T>::from_op("relu", std::move(out), {x}, [](typename Tensor<T>::Node& self) {
    auto& in = *self.inputs[0];
    NdArray<T>& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value.data[i] > T(0)) g.data[i] += self.grad.data[i];
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  NdArray<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  return Tensor<T>::from_op("add", std::move(out), {a, b}, [](typename Tensor<T>::Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->accumulate(self.grad);
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  NdArray<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
  return Tensor<T>::from_op("sub", std::move(out), {a, b}, [](typename Tensor<T>::Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) {
      NdArray<T>& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] -= self.grad.data[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  NdArray<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  return Tensor<T>::from_op("mul", std::move(out), {a, b}, [](typename Tensor<T>::Node& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) {
      NdArray<T>& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] * y.value.data[i];
    }
    if (y.requires_grad) {
      NdArray<T>& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] * x.value.data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  NdArray<T> out = a.value();
  for (T& v : out.data) v *= factor;
  return Tensor<T>::from_op("scale", std::move(out), {a},
                            [factor](typename Tensor<T>::Node& self) {
                              NdArray<T>& g = self.inputs[0]->grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                g.data[i] += factor * self.grad.data[i];
                              }
                            });
}

template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& terms) {
  if (terms.empty()) throw ShapeError("add_n: no terms");
  NdArray<T> out = terms.front().value();
  for (std::size_t t = 1; t < terms.size(); ++t) {
    require_same_shape(out.shape, terms[t].shape(), "add_n");
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += terms[t].value().data[i];
  }
  return Tensor<T>::from_op("add_n", std::move(out), terms, [](typename Tensor<T>::Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->accumulate(self.grad);
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.value().data) acc += v;
  return Tensor<T>::from_op("sum", NdArray<T>({1}, std::vector<T>{acc}), {x},
                            [](typename Tensor<T>::Node& self) {
                              const T g0 = self.grad.data[0];
                              for (T& g : self.inputs[0]->grad_buffer().data) g += g0;
                            });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const NdArray<T>& weights) {
  require_same_shape(x.shape(), weights.shape, "weighted_sum");
  T acc = T(0);
  for (std::size_t i = 0; i < weights.size(); ++i) acc += x.value().data[i] * weights.data[i];
  return Tensor<T>::from_op("weighted_sum", NdArray<T>({1}, std::vector<T>{acc}), {x},
                            [weights](typename Tensor<T>::Node& self) {
                              const T g0 = self.grad.data[0];
                              NdArray<T>& g = self.inputs[0]->grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                g.data[i] += g0 * weights.data[i];
                              }
                            });
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  require_rank3(logits.shape(), "softmax_channels");
  const int c = logits.shape()[2];
  if (c < 2) throw ShapeError("softmax_channels: need at least 2 channels");
  const std::size_t positions = logits.numel() / static_cast<std::size_t>(c);
  NdArray<T> out(logits.shape());
  const T* z = logits.value().data.data();
  for (std::size_t p = 0; p < positions; ++p) {
    const T* zr = z + p * c;
    T* pr = out.data.data() + p * c;
    const T mx = *std::max_element(zr, zr + c);
    T total = T(0);
    for (int j = 0; j < c; ++j) {
      pr[j] = std::exp(zr[j] - mx);
      total += pr[j];
    }
    for (int j = 0; j < c; ++j) pr[j] /= total;
  }
  return Tensor<T>::from_op(
      "softmax_channels", std::move(out), {logits}, [c, positions](typename Tensor<T>::Node& self) {
        NdArray<T>& gz = self.inputs[0]->grad_buffer();
        for (std::size_t p = 0; p < positions; ++p) {
          const T* pr = self.value.data.data() + p * c;
          const T* gr = self.grad.data.data() + p * c;
          T dot = T(0);
          for (int j = 0; j < c; ++j) dot += gr[j] * pr[j];
          for (int j = 0; j < c; ++j) gz.data[p * c + j] += pr[j] * (gr[j] - dot);
        }
      });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, const LabelMap& target, CeReduction reduction) {
  require_rank3(probs.shape(), "cross_entropy");
  const int h = probs.shape()[0], w = probs.shape()[1], c = probs.shape()[2];
  if (target.height != h || target.width != w) {
    throw ShapeError("cross_entropy: label map " + std::to_string(target.height) + "x" +
                     std::to_string(target.width) + " vs prediction " + shape_str(probs.shape()));
  }
  std::size_t valid = 0;
  T acc = T(0);
  const T* p = probs.value().data.data();
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::uint8_t t = target.labels[i];
    if (t == kIgnoreLabel) continue;
    if (t >= c) {
      throw std::out_of_range("cross_entropy: class index " + std::to_string(t) +
                              " out of range for " + std::to_string(c) + " classes");
    }
    ++valid;
    acc -= std::log(std::max(p[i * c + t], kProbFloor<T>));
  }
  const std::size_t denom = reduction == CeReduction::kMeanAll ? target.size() : valid;
  const T inv = valid == 0 ? T(0) : T(1) / static_cast<T>(denom);
  return Tensor<T>::from_op(
      "cross_entropy", NdArray<T>({1}, std::vector<T>{acc * inv}), {probs},
      [target, c, inv](typename Tensor<T>::Node& self) {
        if (inv == T(0)) return;
        auto& in = *self.inputs[0];
        NdArray<T>& g = in.grad_buffer();
        const T g0 = self.grad.data[0];
        for (std::size_t i = 0; i < target.size(); ++i) {
          const std::uint8_t t = target.labels[i];
          if (t == kIgnoreLabel) continue;
          const T pv = in.value.data[i * c + t];
          if (pv > kProbFloor<T>) g.data[i * c + t] -= g0 * inv / pv;
        }
      });
}

template <typename T>
Tensor<T> mse(const Tensor<T>& prediction, const Tensor<T>& target) {
  require_same_shape(prediction.shape(), target.shape(), "mse");
  const std::size_t k = prediction.numel();
  T acc = T(0);
  for (std::size_t i = 0; i < k; ++i) {
    const T d = prediction.value().data[i] - target.value().data[i];
    acc += d * d;
  }
  const T inv = T(1) / static_cast<T>(k);
  return Tensor<T>::from_op(
      "mse", NdArray<T>({1}, std::vector<T>{acc * inv}), {prediction, target},
      [inv](typename Tensor<T>::Node& self) {
        auto& r = *self.inputs[0];
        auto& x = *self.inputs[1];
        const T g0 = self.grad.data[0] * T(2) * inv;
        if (r.requires_grad) {
          NdArray<T>& g = r.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += g0 * (r.value.data[i] - x.value.data[i]);
        }
        if (x.requires_grad) {
          NdArray<T>& g = x.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g.data[i] -= g0 * (r.value.data[i] - x.value.data[i]);
        }
      });
}

template <typename T>
Tensor<T> nearest_resize(const Tensor<T>& x, int height, int width) {
  require_rank3(x.shape(), "nearest_resize");
  if (height <= 0 || width <= 0) throw ShapeError("nearest_resize: target extents must be positive");
  const int h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  if (h == height && w == width) return x;
  std::vector<std::size_t> src(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>(static_cast<long long>(y) * h / height);
    for (int xx = 0; xx < width; ++xx) {
      const int sx = static_cast<int>(static_cast<long long>(xx) * w / width);
      src[static_cast<std::size_t>(y) * width + xx] = (static_cast<std::size_t>(sy) * w + sx) * c;
    }
  }
  NdArray<T> out({height, width, c});
  for (std::size_t p = 0; p < src.size(); ++p) {
    std::copy_n(x.value().data.data() + src[p], c, out.data.data() + p * c);
  }
  return Tensor<T>::from_op("nearest_resize", std::move(out), {x},
                            [src = std::move(src), c](typename Tensor<T>::Node& self) {
                              NdArray<T>& g = self.inputs[0]->grad_buffer();
                              for (std::size_t p = 0; p < src.size(); ++p) {
                                for (int j = 0; j < c; ++j) g.data[src[p] + j] += self.grad.data[p * c + j];
                              }
                            });
}

ChannelKeep sample_channel_keep(int channels, double drop_prob, Rng& rng) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw std::invalid_argument("channel dropout probability must lie in [0, 1)");
  }
  ChannelKeep keep;
  keep.drop_prob = drop_prob;
  keep.keep.resize(static_cast<std::size_t>(channels));
  for (auto& k : keep.keep) k = uniform01(rng) >= drop_prob ? 1 : 0;
  return keep;
}

template <typename T>
Tensor<T> apply_channel_keep(const Tensor<T>& x, const ChannelKeep& keep) {
  require_rank3(x.shape(), "apply_channel_keep");
  const int c = x.shape()[2];
  if (keep.keep.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("apply_channel_keep: keep mask has " + std::to_string(keep.keep.size()) +
                     " channels, tensor has " + std::to_string(c));
  }
  if (keep.drop_prob == 0.0) return x;
  std::vector<T> factor(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) factor[j] = keep.keep[j] ? static_cast<T>(keep.scale()) : T(0);
  NdArray<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= factor[i % c];
  return Tensor<T>::from_op("channel_dropout", std::move(out), {x},
                            [factor = std::move(factor), c](typename Tensor<T>::Node& self) {
                              NdArray<T>& g = self.inputs[0]->grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                g.data[i] += self.grad.data[i] * factor[i % c];
                              }
                            });
}

template <typename T>
DropoutResult<T> channel_dropout(const Tensor<T>& x, double drop_prob, Rng& rng) {
  require_rank3(x.shape(), "channel_dropout");
  ChannelKeep keep = sample_channel_keep(x.shape()[2], drop_prob, rng);
  Tensor<T> out = apply_channel_keep(x, keep);
  return {std::move(out), std::move(keep)};
}

template <typename T>
Tensor<T> prototype_cosine_loss_map(const Tensor<T>& features, std::span<const T> prototype, T tau) {
  require_rank3(features.shape(), "prototype_cosine_loss_map");
  const int h = features.shape()[0], w = features.shape()[1], d = features.shape()[2];
  if (prototype.size() != static_cast<std::size_t>(d)) {
    throw ShapeError("prototype_cosine_loss_map: prototype has " + std::to_string(prototype.size()) +
                     " dims, features have " + std::to_string(d));
  }
  T vnorm2 = T(0);
  for (T v : prototype) vnorm2 += v * v;
  if (!(vnorm2 > T(0))) throw std::invalid_argument("prototype_cosine_loss_map: zero prototype");
  const T vnorm = std::sqrt(vnorm2);
  std::vector<T> proto(prototype.begin(), prototype.end());

  NdArray<T> out({h, w, 1});
  const T* f = features.value().data.data();
  for (int p = 0; p < h * w; ++p) {
    const T* z = f + static_cast<std::size_t>(p) * d;
    T zz = T(0), zv = T(0);
    for (int j = 0; j < d; ++j) {
      zz += z[j] * z[j];
      zv += z[j] * proto[j];
    }
    if (zz == T(0)) continue;
    out.data[p] = (T(1) - zv / (std::sqrt(zz) * vnorm)) / tau;
  }
  return Tensor<T>::from_op(
      "prototype_cosine_loss_map", std::move(out), {features},
      [proto = std::move(proto), vnorm, tau, d](typename Tensor<T>::Node& self) {
        auto& in = *self.inputs[0];
        NdArray<T>& g = in.grad_buffer();
        const std::size_t positions = self.value.size();
        for (std::size_t p = 0; p < positions; ++p) {
          const T gp = self.grad.data[p];
          if (gp == T(0)) continue;
          const T* z = in.value.data.data() + p * d;
          T zz = T(0), zv = T(0);
          for (int j = 0; j < d; ++j) {
            zz += z[j] * z[j];
            zv += z[j] * proto[j];
          }
          if (zz == T(0)) continue;
          const T zn = std::sqrt(zz);
          const T cosv = zv / (zn * vnorm);
          // d cos / dz = v / (|z||v|) - cos z / |z|^2
          for (int j = 0; j < d; ++j) {
            const T dcos = proto[j] / (zn * vnorm) - cosv * z[j] / zz;
            g.data[p * d + j] -= gp * dcos / tau;
          }
        }
      });
}

template <typename T>
LabelMap argmax_channels(const NdArray<T>& probs) {
  require_rank3(probs.shape, "argmax_channels");
  const int h = probs.shape[0], w = probs.shape[1], c = probs.shape[2];
  LabelMap out(h, w);
  for (std::size_t p = 0; p < out.size(); ++p) {
    const T* row = probs.data.data() + p * c;
    int best = 0;
    for (int j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out.labels[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
std::vector<T> max_channels(const NdArray<T>& probs) {
  require_rank3(probs.shape, "max_channels");
  const int c = probs.shape[2];
  std::vector<T> out(probs.size() / static_cast<std::size_t>(c));
  for (std::size_t p = 0; p < out.size(); ++p) {
    const T* row = probs.data.data() + p * c;
    out[p] = *std::max_element(row, row + c);
  }
  return out;
}

#define MASKSEG_INSTANTIATE_OPS(T)                                                               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, int, int, const Tensor<T>*);     \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> add_n(const std::vector<Tensor<T>>&);                                       \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> weighted_sum(const Tensor<T>&, const NdArray<T>&);                          \
  template Tensor<T> softmax_channels(const Tensor<T>&);                                         \
  template Tensor<T> cross_entropy(const Tensor<T>&, const LabelMap&, CeReduction);              \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> nearest_resize(const Tensor<T>&, int, int);                                 \
  template Tensor<T> apply_channel_keep(const Tensor<T>&, const ChannelKeep&);                   \
  template DropoutResult<T> channel_dropout(const Tensor<T>&, double, Rng&);                     \
  template Tensor<T> prototype_cosine_loss_map(const Tensor<T>&, std::span<const T>, T);         \
  template LabelMap argmax_channels(const NdArray<T>&);                                          \
  template std::vector<T> max_channels(const NdArray<T>&);

MASKSEG_INSTANTIATE_OPS(float)
MASKSEG_INSTANTIATE_OPS(double)

#undef MASKSEG_INSTANTIATE_OPS

}  // namespace maskseg
