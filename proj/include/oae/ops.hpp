#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "oae/tensor.hpp"

// Differentiable ops. Each op records a node when any input lives on a tape;
// otherwise it just computes. Broadcasting is limited to add_row.
namespace oae::ops {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// Softmax over the last axis.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a);

// Normalizes over the last axis, then applies gamma * x + beta (gamma, beta: [C]).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

template <typename T>
struct MaxResult {
  Tensor<T> values;
  std::vector<std::size_t> argmax;  // index along the reduced axis, per output element
};

// Max along `axis`, removing it. Ties resolve to the lowest index.
template <typename T>
MaxResult<T> max_axis(const Tensor<T>& a, std::size_t axis);

// Mean along `axis`, removing it.
template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis);

// Scalar sum / mean over all elements.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> mean(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// 2-D transpose.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

// Selects slices along axis 0; indices may repeat.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> indices);

// a[m, n] + row[n] on every row.
template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row);

// Records a caller-defined op: the result is tracked iff some input requires grad.
template <typename T>
Tensor<T> custom(const char* op, Shape shape, std::vector<T> values, std::span<const Tensor<T>* const> inputs,
                 typename Tape<T>::BackwardFn backward);

// Multiply-adds performed by matmul on the calling thread since the last reset.
std::uint64_t matmul_macs();
void reset_matmul_macs();

}  // namespace oae::ops
