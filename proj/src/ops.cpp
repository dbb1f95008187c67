#include "oae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "oae/errors.hpp"

namespace oae::ops {
namespace {

thread_local std::uint64_t g_matmul_macs = 0;

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
Tensor<T> emit_span(const char* op, Shape shape, std::vector<T> values,
                    std::span<const Tensor<T>* const> inputs, typename Tape<T>::BackwardFn fn) {
  Tape<T>* tape = nullptr;
  bool tracked = false;
  for (const Tensor<T>* in : inputs) {
    if (in->tape() == nullptr) continue;
    if (tape != nullptr && tape != in->tape()) throw UsageError(std::string(op) + ": inputs on different tapes");
    tape = in->tape();
    tracked = tracked || in->requires_grad();
  }
  if (tape == nullptr || !tracked) return Tensor<T>(std::move(shape), std::move(values));
  return tape->record(op, std::move(shape), std::move(values), inputs, std::move(fn));
}

template <typename T>
Tensor<T> emit(const char* op, Shape shape, std::vector<T> values,
               std::initializer_list<const Tensor<T>*> inputs, typename Tape<T>::BackwardFn fn) {
  return emit_span(op, std::move(shape), std::move(values),
              std::span<const Tensor<T>* const>(inputs.begin(), inputs.size()), std::move(fn));
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out.push_back(shape[i]);
  return out;
}

std::size_t last_dim(const Shape& shape, const char* op) {
  if (shape.empty()) throw ShapeError(std::string(op) + ": needs rank >= 1, got scalar");
  return shape.back();
}

}  // namespace

template <typename T>
Tensor<T> custom(const char* op, Shape shape, std::vector<T> values, std::span<const Tensor<T>* const> inputs,
                 typename Tape<T>::BackwardFn backward) {
  return emit_span<T>(op, std::move(shape), std::move(values), inputs, std::move(backward));
}

std::uint64_t matmul_macs() { return g_matmul_macs; }
void reset_matmul_macs() { g_matmul_macs = 0; }

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> c(m * n, T(0));
  const T* A = a.data();
  const T* B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  g_matmul_macs += static_cast<std::uint64_t>(m) * k * n;
  auto sa = a.storage();
  auto sb = b.storage();
  return emit<T>("matmul", {m, n}, std::move(c), {&a, &b},
                 [sa, sb, m, k, n](std::span<const T> g, std::span<const std::span<T>> gi) {
                   const T* A = sa->data();
                   const T* B = sb->data();
                   if (!gi[0].empty()) {
                     T* ga = gi[0].data();
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         T acc = T(0);
                         const T* grow = g.data() + i * n;
                         const T* brow = B + p * n;
                         for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                         ga[i * k + p] += acc;
                       }
                   }
                   if (!gi[1].empty()) {
                     T* gb = gi[1].data();
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         const T av = A[i * k + p];
                         const T* grow = g.data() + i * n;
                         T* out = gb + p * n;
                         for (std::size_t j = 0; j < n; ++j) out[j] += av * grow[j];
                       }
                   }
                 });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return emit<T>("add", a.shape(), std::move(out), {&a, &b},
                 [](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (auto& dst : gi)
                     for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
                 });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("sub", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return emit<T>("sub", a.shape(), std::move(out), {&a, &b},
                 [](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i];
                   for (std::size_t i = 0; i < gi[1].size(); ++i) gi[1][i] -= g[i];
                 });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto sa = a.storage();
  auto sb = b.storage();
  return emit<T>("mul", a.shape(), std::move(out), {&a, &b},
                 [sa, sb](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i] * (*sb)[i];
                   for (std::size_t i = 0; i < gi[1].size(); ++i) gi[1][i] += g[i] * (*sa)[i];
                 });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return emit<T>("scale", a.shape(), std::move(out), {&a},
                 [factor](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i] * factor;
                 });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  const std::size_t c = last_dim(a.shape(), "softmax_rows");
  if (c == 0) throw ShapeError("softmax_rows: softmax over an empty axis " + shape_str(a.shape()));
  const std::size_t rows = a.size() / c;
  auto y = std::make_shared<std::vector<T>>(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.data() + r * c;
    T* out = y->data() + r * c;
    const T m = *std::max_element(x, x + c);
    T total = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      out[j] = std::exp(x[j] - m);
      total += out[j];
    }
    for (std::size_t j = 0; j < c; ++j) out[j] /= total;
  }
  std::vector<T> values = *y;
  return emit<T>("softmax_rows", a.shape(), std::move(values), {&a},
                 [y, rows, c](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (std::size_t r = 0; r < rows; ++r) {
                     const T* yr = y->data() + r * c;
                     const T* gr = g.data() + r * c;
                     T dot = T(0);
                     for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
                     for (std::size_t j = 0; j < c; ++j) gi[0][r * c + j] += yr[j] * (gr[j] - dot);
                   }
                 });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t c = last_dim(x.shape(), "layer_norm");
  if (gamma.shape() != Shape{c}) mismatch("layer_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{c}) mismatch("layer_norm", x.shape(), beta.shape());
  if (c == 0) throw ShapeError("layer_norm: empty normalization axis");
  const std::size_t rows = x.size() / c;
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_sigma = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * c;
    T mu = T(0);
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (xr[j] - mu) * is;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = h * gamma[j] + beta[j];
    }
  }
  auto sg = gamma.storage();
  return emit<T>("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                 [xhat, inv_sigma, sg, rows, c](std::span<const T> g, std::span<const std::span<T>> gi) {
                   std::vector<T> dh(c);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const T* h = xhat->data() + r * c;
                     const T* gr = g.data() + r * c;
                     if (!gi[1].empty())
                       for (std::size_t j = 0; j < c; ++j) gi[1][j] += gr[j] * h[j];
                     if (!gi[2].empty())
                       for (std::size_t j = 0; j < c; ++j) gi[2][j] += gr[j];
                     if (gi[0].empty()) continue;
                     T mean_dh = T(0), mean_dhh = T(0);
                     for (std::size_t j = 0; j < c; ++j) {
                       dh[j] = gr[j] * (*sg)[j];
                       mean_dh += dh[j];
                       mean_dhh += dh[j] * h[j];
                     }
                     mean_dh /= static_cast<T>(c);
                     mean_dhh /= static_cast<T>(c);
                     const T is = (*inv_sigma)[r];
                     for (std::size_t j = 0; j < c; ++j)
                       gi[0][r * c + j] += is * (dh[j] - mean_dh - h[j] * mean_dhh);
                   }
                 });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = a[i];
    out[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
  }
  auto sa = a.storage();
  return emit<T>("gelu", a.shape(), std::move(out), {&a},
                 [sa, inv_sqrt2](std::span<const T> g, std::span<const std::span<T>> gi) {
                   const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
                   for (std::size_t i = 0; i < gi[0].size(); ++i) {
                     const T x = (*sa)[i];
                     const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
                     const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
                     gi[0][i] += g[i] * (cdf + x * pdf);
                   }
                 });
}

template <typename T>
MaxResult<T> max_axis(const Tensor<T>& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "max_axis");
  if (s.n == 0) throw ShapeError("max_axis: reduction over an empty axis " + shape_str(a.shape()));
  std::vector<T> out(s.outer * s.inner);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const T* base = a.data() + o * s.n * s.inner + i;
      std::size_t best = 0;
      for (std::size_t j = 1; j < s.n; ++j)
        if (base[j * s.inner] > base[best * s.inner]) best = j;
      out[o * s.inner + i] = base[best * s.inner];
      (*arg)[o * s.inner + i] = best;
    }
  Tensor<T> values = emit<T>("max_axis", drop_axis(a.shape(), axis), std::move(out), {&a},
                             [arg, s](std::span<const T> g, std::span<const std::span<T>> gi) {
                               for (std::size_t o = 0; o < s.outer; ++o)
                                 for (std::size_t i = 0; i < s.inner; ++i) {
                                   const std::size_t k = o * s.inner + i;
                                   gi[0][(o * s.n + (*arg)[k]) * s.inner + i] += g[k];
                                 }
                             });
  return {std::move(values), *arg};
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "mean_axis");
  if (s.n == 0) throw ShapeError("mean_axis: reduction over an empty axis " + shape_str(a.shape()));
  std::vector<T> out(s.outer * s.inner, T(0));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += a[(o * s.n + j) * s.inner + i];
  const T inv = T(1) / static_cast<T>(s.n);
  for (T& v : out) v *= inv;
  return emit<T>("mean_axis", drop_axis(a.shape(), axis), std::move(out), {&a},
                 [s, inv](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (std::size_t o = 0; o < s.outer; ++o)
                     for (std::size_t j = 0; j < s.n; ++j)
                       for (std::size_t i = 0; i < s.inner; ++i)
                         gi[0][(o * s.n + j) * s.inner + i] += g[o * s.inner + i] * inv;
                 });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.values()) total += v;
  return emit<T>("sum", Shape{}, std::vector<T>{total}, {&a},
                 [](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (T& v : gi[0]) v += g[0];
                 });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  T total = T(0);
  for (T v : a.values()) total += v;
  const T inv = T(1) / static_cast<T>(a.size());
  return emit<T>("mean", Shape{}, std::vector<T>{total * inv}, {&a},
                 [inv](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (T& v : gi[0]) v += g[0] * inv;
                 });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) mismatch("reshape", a.shape(), shape);
  std::vector<T> out(a.values().begin(), a.values().end());
  return emit<T>("reshape", std::move(shape), std::move(out), {&a},
                 [](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i];
                 });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return emit<T>("transpose", {n, m}, std::move(out), {&a},
                 [m, n](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j) gi[0][i * n + j] += g[j * m + i];
                 });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != ref.size()) mismatch("concat", ref, probe);
    probe[axis] = ref[axis];
    if (probe != ref) mismatch("concat", ref, p.shape());
    out_shape[axis] += p.dim(axis);
  }
  const AxisSplit s = split_axis(out_shape, axis, "concat");
  std::vector<std::size_t> widths;  // contiguous block length per part per outer index
  for (const auto& p : parts) widths.push_back(p.dim(axis) * s.inner);
  const std::size_t row = s.n * s.inner;
  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const T* src = parts[q].data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(src + o * widths[q], widths[q], out.data() + o * row + offset);
    offset += widths[q];
  }
  std::vector<const Tensor<T>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  return emit_span<T>("concat", std::move(out_shape), std::move(out), std::span<const Tensor<T>* const>(inputs),
                 [widths, row, outer = s.outer](std::span<const T> g, std::span<const std::span<T>> gi) {
                   std::size_t offset = 0;
                   for (std::size_t q = 0; q < widths.size(); ++q) {
                     if (!gi[q].empty())
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t i = 0; i < widths[q]; ++i)
                           gi[q][o * widths[q] + i] += g[o * row + offset + i];
                     offset += widths[q];
                   }
                 });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> indices) {
  if (a.rank() == 0) throw ShapeError("gather_rows: scalar input");
  const std::size_t rows = a.dim(0);
  const std::size_t width = rows == 0 ? 0 : a.size() / rows;
  Shape out_shape = a.shape();
  out_shape[0] = indices.size();
  std::vector<T> out(indices.size() * width);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " out of range for " +
                       shape_str(a.shape()));
    }
    std::copy_n(a.data() + indices[r] * width, width, out.data() + r * width);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  return emit<T>("gather_rows", std::move(out_shape), std::move(out), {&a},
                 [idx, width](std::span<const T> g, std::span<const std::span<T>> gi) {
                   for (std::size_t r = 0; r < idx->size(); ++r)
                     for (std::size_t j = 0; j < width; ++j) gi[0][(*idx)[r] * width + j] += g[r * width + j];
                 });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
  if (a.rank() != 2 || row.rank() != 1 || a.dim(1) != row.dim(0)) mismatch("add_row", a.shape(), row.shape());
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + row[j];
  return emit<T>("add_row", a.shape(), std::move(out), {&a, &row},
                 [m, n](std::span<const T> g, std::span<const std::span<T>> gi) {
                   if (!gi[0].empty())
                     for (std::size_t i = 0; i < m * n; ++i) gi[0][i] += g[i];
                   if (!gi[1].empty())
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) gi[1][j] += g[i * n + j];
                 });
}

#define OAE_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                             \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> gelu(const Tensor<T>&);                                                     \
  template MaxResult<T> max_axis(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> mean_axis(const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> transpose(const Tensor<T>&);                                                \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                            \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);                \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> custom(const char*, Shape, std::vector<T>, std::span<const Tensor<T>* const>, \
                            typename Tape<T>::BackwardFn);

OAE_INSTANTIATE_OPS(float)
OAE_INSTANTIATE_OPS(double)

#undef OAE_INSTANTIATE_OPS

}  // namespace oae::ops
