#include "maskseg/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace maskseg {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
NdArray<T>::NdArray(Shape s, T fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

template <typename T>
NdArray<T>::NdArray(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
NdArray<T>& Tensor<T>::Node::grad_buffer() {
  if (grad.empty()) grad = NdArray<T>(value.shape);
  return grad;
}

template <typename T>
void Tensor<T>::Node::accumulate(const NdArray<T>& delta) {
  NdArray<T>& g = grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += delta.data[i];
}

template <typename T>
Tensor<T> Tensor<T>::constant(NdArray<T> value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "const";
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(NdArray<T> value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v) {
  return constant(NdArray<T>({1}, std::vector<T>{v}));
}

template <typename T>
Tensor<T> Tensor<T>::from_op(const char* op, NdArray<T> value, std::vector<Tensor> inputs,
                             BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  const bool tracked =
      GradMode::enabled() &&
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value.data[0];
}

template <typename T>
const NdArray<T>& Tensor<T>::grad() const {
  if (node_->grad.empty()) node_->grad = NdArray<T>(node_->value.shape);
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad = NdArray<T>();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return constant(node_->value);
}

template <typename T>
void backward(const Tensor<T>& loss) {
  using Node = typename Tensor<T>::Node;
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward) n->grad = NdArray<T>(n->value.shape);
  }
  loss.node()->grad_buffer().data[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

template struct NdArray<float>;
template struct NdArray<double>;
template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace maskseg
