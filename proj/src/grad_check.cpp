#include "oae/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oae/errors.hpp"

namespace oae {

GradCheckReport grad_check(const ScalarFn& f, const Tensor<double>& x, double h, double tol,
                           std::span<const std::size_t> coords) {
  GradCheckReport report;
  if (coords.empty()) {
    report.coords.resize(x.size());
    std::iota(report.coords.begin(), report.coords.end(), std::size_t{0});
  } else {
    report.coords.assign(coords.begin(), coords.end());
  }

  Tape<double> tape;
  const Tensor<double> leaf = tape.watch(x);
  const Tensor<double> y = f(leaf);
  if (y.size() != 1) throw ShapeError("grad_check: f must be scalar-valued, got " + shape_str(y.shape()));
  std::vector<double> g(x.size(), 0.0);
  if (y.requires_grad()) {
    tape.backward(y);
    g = tape.grad(leaf);
  }

  auto eval = [&](std::size_t i, double delta) {
    Tensor<double> probe = x.detach();
    probe.mutable_values()[i] += delta;
    return f(probe).item();
  };

  for (std::size_t i : report.coords) {
    if (i >= x.size()) throw UsageError("grad_check: coordinate out of range");
    const double fd = (eval(i, h) - eval(i, -h)) / (2.0 * h);
    const double ad = g[i];
    const double denom = std::max({std::abs(ad), std::abs(fd), 1e-8});
    const double err = std::abs(ad - fd) / denom;
    report.analytic.push_back(ad);
    report.numeric.push_back(fd);
    report.rel_error.push_back(err);
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace oae
