#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace oae {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

// Dense row-major array. Values are shared and immutable once constructed, so
// copies are cheap and a Tensor off any tape may be shared across threads.
// A Tensor recorded on a tape carries the id of its producing node.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor();
  Tensor(Shape shape, std::vector<T> values);
  explicit Tensor(Shape shape);  // zeros

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
  static Tensor full(Shape shape, T value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_->size(); }

  std::span<const T> values() const { return {values_->data(), values_->size()}; }
  const T* data() const { return values_->data(); }
  T operator[](std::size_t flat) const { return (*values_)[flat]; }
  T item() const;

  // Copy-on-write access. Only valid for tensors that are not on a tape.
  std::vector<T>& mutable_values();

  bool requires_grad() const { return node_ >= 0; }
  int node() const { return node_; }
  Tape<T>* tape() const { return tape_; }

  // Same values, no tape association.
  Tensor detach() const;

  const std::shared_ptr<const std::vector<T>>& storage() const { return values_; }

 private:
  friend class Tape<T>;

  Shape shape_;
  std::shared_ptr<const std::vector<T>> values_;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

// Append-only record of the forward computation. Each node stores its input
// node ids (always earlier nodes) and a closure holding whatever activations
// its backward rule needs. backward() walks the nodes once in reverse order.
template <typename T>
class Tape {
 public:
  // Receives the output gradient and one accumulator per input; accumulators
  // for inputs that do not require grad are empty spans.
  using BackwardFn = std::function<void(std::span<const T> grad_out, std::span<const std::span<T>> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf view of `value` that requires grad on this tape.
  Tensor<T> watch(const Tensor<T>& value);

  // Records an op result. Inputs may be constants (no node) or live on this tape.
  // If no input requires grad the result is returned untracked.
  Tensor<T> record(const char* op, Shape shape, std::vector<T> values,
                   std::span<const Tensor<T>* const> inputs, BackwardFn backward);

  void backward(const Tensor<T>& loss);

  // Gradient accumulated for `t` (all zeros if nothing flowed into it).
  std::vector<T> grad(const Tensor<T>& t) const;
  bool has_grad(const Tensor<T>& t) const;

  void reset();

  std::size_t node_count() const { return nodes_.size(); }
  const char* op_name(int node) const { return nodes_.at(node).op; }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    const char* op;
    std::vector<int> inputs;  // -1 for constant inputs
    std::size_t size;
    BackwardFn backward;
  };

  void check_owned(const Tensor<T>& t, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool backward_done_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace oae
