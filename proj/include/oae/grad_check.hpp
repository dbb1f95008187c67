#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "oae/tensor.hpp"

namespace oae {

struct GradCheckReport {
  std::vector<std::size_t> coords;
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> rel_error;
  double max_rel_error = 0.0;
  bool pass = false;
};

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

// Compares reverse-mode gradients of f at x with central differences of step h.
// Per coordinate: |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8). `coords` restricts the
// checked coordinates (empty: all of them). Throws if f is not scalar-valued.
GradCheckReport grad_check(const ScalarFn& f, const Tensor<double>& x, double h, double tol,
                           std::span<const std::size_t> coords = {});

}  // namespace oae
