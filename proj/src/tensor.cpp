#include "oae/tensor.hpp"

#include <sstream>

#include "oae/errors.hpp"

namespace oae {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor() : shape_{0}, values_(std::make_shared<const std::vector<T>>()) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
  if (numel(shape_) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape_) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  values_ = std::make_shared<const std::vector<T>>(std::move(values));
}

template <typename T>
Tensor<T>::Tensor(Shape shape) : Tensor(shape, std::vector<T>(numel(shape), T(0))) {}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item: tensor " + shape_str(shape_) + " is not a scalar");
  return (*values_)[0];
}

template <typename T>
std::vector<T>& Tensor<T>::mutable_values() {
  if (tape_ != nullptr) throw UsageError("mutable_values: tensor is recorded on a tape");
  if (values_.use_count() > 1) values_ = std::make_shared<const std::vector<T>>(*values_);
  return const_cast<std::vector<T>&>(*values_);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out;
  out.shape_ = shape_;
  out.values_ = values_;
  return out;
}

template <typename T>
void Tape<T>::check_owned(const Tensor<T>& t, const char* op) const {
  if (t.tape_ != nullptr && t.tape_ != this) {
    throw UsageError(std::string(op) + ": input belongs to a different tape");
  }
}

template <typename T>
Tensor<T> Tape<T>::watch(const Tensor<T>& value) {
  if (backward_done_) throw UsageError("tape: cannot record after backward without reset");
  Tensor<T> out = value.detach();
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{"leaf", {}, value.size(), nullptr});
  return out;
}

template <typename T>
Tensor<T> Tape<T>::record(const char* op, Shape shape, std::vector<T> values,
                          std::span<const Tensor<T>* const> inputs, BackwardFn backward) {
  if (backward_done_) throw UsageError("tape: cannot record after backward without reset");
  std::vector<int> ids;
  ids.reserve(inputs.size());
  bool any = false;
  for (const Tensor<T>* in : inputs) {
    check_owned(*in, op);
    ids.push_back(in->node_);
    any = any || in->node_ >= 0;
  }
  Tensor<T> out(std::move(shape), std::move(values));
  if (!any) return out;
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{op, std::move(ids), out.size(), std::move(backward)});
  return out;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (backward_done_) throw UsageError("backward: already run on this tape; call reset() first");
  if (loss.tape_ != this || loss.node_ < 0) throw UsageError("backward: loss is not recorded on this tape");
  if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  backward_done_ = true;
  grads_.assign(nodes_.size(), {});
  grads_[loss.node_].assign(1, T(1));

  std::vector<std::span<T>> spans;
  for (int i = loss.node_; i >= 0; --i) {
    Node& node = nodes_[i];
    if (grads_[i].empty() || !node.backward) continue;
    spans.clear();
    for (int in : node.inputs) {
      if (in < 0) {
        spans.emplace_back();
        continue;
      }
      auto& g = grads_[in];
      if (g.empty()) g.assign(nodes_[in].size, T(0));
      spans.emplace_back(g.data(), g.size());
    }
    node.backward(std::span<const T>(grads_[i]), std::span<const std::span<T>>(spans));
  }
}

template <typename T>
std::vector<T> Tape<T>::grad(const Tensor<T>& t) const {
  if (t.tape_ != this || t.node_ < 0) throw UsageError("grad: tensor is not recorded on this tape");
  if (!backward_done_) throw UsageError("grad: backward has not been run");
  const auto& g = grads_[t.node_];
  if (g.empty()) return std::vector<T>(t.size(), T(0));
  return g;
}

template <typename T>
bool Tape<T>::has_grad(const Tensor<T>& t) const {
  return backward_done_ && t.tape_ == this && t.node_ >= 0 && !grads_[t.node_].empty();
}

template <typename T>
void Tape<T>::reset() {
  nodes_.clear();
  grads_.clear();
  backward_done_ = false;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace oae
