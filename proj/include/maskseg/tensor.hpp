#pragma once

// Dense HWC arrays and a reverse-mode autodiff tape over them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskseg {

using Shape = std::vector<int>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct NdArray {
  Shape shape;
  std::vector<T> data;

  NdArray() = default;
  explicit NdArray(Shape s, T fill = T(0));
  NdArray(Shape s, std::vector<T> values);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  bool empty() const { return data.empty(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // Rank-3 (H x W x C) accessors.
  T& at(int h, int w, int c) { return data[index(h, w, c)]; }
  const T& at(int h, int w, int c) const { return data[index(h, w, c)]; }
  std::size_t index(int h, int w, int c) const {
    return (static_cast<std::size_t>(h) * static_cast<std::size_t>(shape[1]) +
            static_cast<std::size_t>(w)) *
               static_cast<std::size_t>(shape[2]) +
           static_cast<std::size_t>(c);
  }

  template <typename U>
  NdArray<U> cast() const {
    NdArray<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

// Thread-local switch; while disabled, ops do not record tape nodes.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  struct Node {
    NdArray<T> value;
    NdArray<T> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into inputs' grads.
    std::function<void(Node&)> backward;

    void accumulate(const NdArray<T>& delta);
    NdArray<T>& grad_buffer();
  };
  using NodePtr = std::shared_ptr<Node>;
  using BackwardFn = std::function<void(Node&)>;

  Tensor() = default;

  static Tensor constant(NdArray<T> value);
  static Tensor parameter(NdArray<T> value);
  static Tensor scalar(T v);

  // Extension point for new differentiable ops. When no input requires a
  // gradient (or grad mode is off) the result is a constant and `backward`
  // is dropped.
  static Tensor from_op(const char* op, NdArray<T> value, std::vector<Tensor> inputs,
                        BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t numel() const { return node_->value.size(); }
  const NdArray<T>& value() const { return node_->value; }
  std::span<const T> data() const { return node_->value.data; }
  T item() const;

  // In-place access for optimizer updates and finite-difference probing.
  NdArray<T>& mutable_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const NdArray<T>& grad() const;
  void zero_grad();
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  const char* op() const { return node_->op; }
  const NodePtr& node() const { return node_; }

  Tensor detach() const;

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

// Populates grads of every requires_grad tensor reachable from `loss`.
// Leaf grads accumulate across calls; interior grads are recomputed.
template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace maskseg
