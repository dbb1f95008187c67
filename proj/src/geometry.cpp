#include "oae/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oae/errors.hpp"
#include "oae/ops.hpp"
#include "oae/rng.hpp"

namespace oae {
namespace {

double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

void check_points_tensor(const Shape& s, const char* op) {
  if (s.size() != 2 || s[1] != 3) throw ShapeError(std::string(op) + ": expected [n, 3] points, got " + shape_str(s));
  if (s[0] == 0) throw ShapeError(std::string(op) + ": empty point set");
}

}  // namespace

void validate(const PointCloud& cloud) {
  if (cloud.empty()) throw DataError("point cloud is empty");
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (double v : cloud.points[i])
      if (!std::isfinite(v)) throw DataError("point " + std::to_string(i) + " has a non-finite coordinate");
}

PointCloud normalize(const PointCloud& cloud) {
  validate(cloud);
  Point3 c{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points)
    for (int a = 0; a < 3; ++a) c[a] += p[a];
  for (double& v : c) v /= static_cast<double>(cloud.size());
  double radius = 0.0;
  for (const auto& p : cloud.points) {
    const double d2 = squared_distance(p, c);
    radius = std::max(radius, d2);
  }
  radius = std::sqrt(radius);
  // Shrunk by 2^-22 so float rounding cannot push the max norm above 1.
  const double inv = (radius > 0.0 ? 1.0 / radius : 1.0) * (1.0 - 0x1.0p-22);
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points)
    out.points.push_back({quantize((p[0] - c[0]) * inv), quantize((p[1] - c[1]) * inv), quantize((p[2] - c[2]) * inv)});
  return out;
}

double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t count, std::size_t start) {
  const std::size_t n = cloud.size();
  if (count == 0) throw UsageError("fps: count must be >= 1");
  if (count > n) {
    throw UsageError("fps: requested " + std::to_string(count) + " seeds from " + std::to_string(n) + " points");
  }
  if (start >= n) throw UsageError("fps: start index out of range");
  std::vector<std::size_t> chosen{start};
  chosen.reserve(count);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t last = start;
  while (chosen.size() < count) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      nearest[j] = std::min(nearest[j], squared_distance(cloud.points[j], cloud.points[last]));
      if (nearest[j] > best_d) {
        best_d = nearest[j];
        best = j;
      }
    }
    chosen.push_back(best);
    last = best;
  }
  return chosen;
}

std::vector<std::size_t> fps_seeded(const PointCloud& cloud, std::size_t count, std::uint64_t seed) {
  if (cloud.empty()) throw UsageError("fps: empty cloud");
  Rng rng(seed);
  return fps(cloud, count, static_cast<std::size_t>(rng.below(cloud.size())));
}

PatchSet knn_group_centralize(const PointCloud& cloud, std::span<const std::size_t> seed_indices,
                              std::size_t patch_size) {
  const std::size_t n = cloud.size();
  if (patch_size == 0) throw UsageError("knn: patch size must be >= 1");
  if (patch_size > n) {
    throw UsageError("knn: patch size " + std::to_string(patch_size) + " exceeds cloud size " + std::to_string(n));
  }
  PatchSet out;
  out.groups = seed_indices.size();
  out.patch_size = patch_size;
  out.seeds.reserve(out.groups);
  out.offsets.reserve(out.groups * patch_size);
  out.source_indices.reserve(out.groups * patch_size);

  std::vector<double> d2(n);
  std::vector<std::size_t> order(n);
  for (std::size_t s : seed_indices) {
    if (s >= n) throw UsageError("knn: seed index out of range");
    const Point3& seed = cloud.points[s];
    for (std::size_t j = 0; j < n; ++j) d2[j] = squared_distance(cloud.points[j], seed);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(patch_size), order.end(),
                      [&](std::size_t a, std::size_t b) { return d2[a] < d2[b] || (d2[a] == d2[b] && a < b); });
    out.seeds.push_back(seed);
    for (std::size_t k = 0; k < patch_size; ++k) {
      const Point3& p = cloud.points[order[k]];
      out.source_indices.push_back(order[k]);
      out.offsets.push_back({p[0] - seed[0], p[1] - seed[1], p[2] - seed[2]});
    }
  }
  return out;
}

std::string to_string(OcclusionStrategy s) { return s == OcclusionStrategy::random ? "random" : "block"; }

OcclusionStrategy parse_occlusion_strategy(const std::string& s) {
  if (s == "random") return OcclusionStrategy::random;
  if (s == "block") return OcclusionStrategy::block;
  throw UsageError("unknown occlusion strategy '" + s + "'");
}

std::size_t occluded_count(std::size_t groups, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw UsageError("occlusion ratio must lie in [0, 1)");
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(groups)));
}

namespace {

OcclusionMask make_mask(std::size_t groups, std::vector<std::size_t> occluded, OcclusionStrategy strategy,
                        double ratio) {
  OcclusionMask mask;
  mask.strategy = strategy;
  mask.ratio = ratio;
  std::sort(occluded.begin(), occluded.end());
  std::vector<bool> hidden(groups, false);
  for (std::size_t i : occluded) hidden[i] = true;
  for (std::size_t i = 0; i < groups; ++i)
    if (!hidden[i]) mask.visible.push_back(i);
  mask.occluded = std::move(occluded);
  return mask;
}

}  // namespace

OcclusionMask occlude_block(std::size_t groups, double ratio, std::span<const Point3> seeds, std::size_t anchor) {
  const std::size_t r = occluded_count(groups, ratio);
  if (seeds.size() != groups) throw UsageError("occlude: seed count does not match group count");
  if (anchor >= groups) throw UsageError("occlude: anchor out of range");
  std::vector<std::size_t> order(groups);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> d2(groups);
  for (std::size_t i = 0; i < groups; ++i) d2[i] = squared_distance(seeds[i], seeds[anchor]);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d2[a] < d2[b]; });
  order.resize(r);
  return make_mask(groups, std::move(order), OcclusionStrategy::block, ratio);
}

OcclusionMask occlude(std::size_t groups, double ratio, OcclusionStrategy strategy, std::span<const Point3> seeds,
                      std::uint64_t rng_seed) {
  const std::size_t r = occluded_count(groups, ratio);
  if (groups == 0) throw UsageError("occlude: no groups");
  Rng rng(rng_seed);
  if (strategy == OcclusionStrategy::block) {
    const auto anchor = static_cast<std::size_t>(rng.below(groups));
    return occlude_block(groups, ratio, seeds, anchor);
  }
  std::vector<std::size_t> perm(groups);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < r; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(groups - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(r);
  return make_mask(groups, std::move(perm), OcclusionStrategy::random, ratio);
}

template <typename T>
Tensor<T> chamfer_distance(const Tensor<T>& predicted, const Tensor<T>& target) {
  check_points_tensor(predicted.shape(), "chamfer_distance");
  check_points_tensor(target.shape(), "chamfer_distance");
  const std::size_t m = predicted.dim(0), l = target.dim(0);
  const T* P = predicted.data();
  const T* Q = target.data();

  // nearest[i] for each predicted point, back[j] for each target point
  auto nearest = std::make_shared<std::vector<std::size_t>>(m, 0);
  auto back = std::make_shared<std::vector<std::size_t>>(l, 0);
  std::vector<T> best_pq(m, std::numeric_limits<T>::infinity());
  std::vector<T> best_qp(l, std::numeric_limits<T>::infinity());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      const T dx = P[3 * i] - Q[3 * j], dy = P[3 * i + 1] - Q[3 * j + 1], dz = P[3 * i + 2] - Q[3 * j + 2];
      const T d2 = dx * dx + dy * dy + dz * dz;
      if (d2 < best_pq[i]) {
        best_pq[i] = d2;
        (*nearest)[i] = j;
      }
      if (d2 < best_qp[j]) {
        best_qp[j] = d2;
        (*back)[j] = i;
      }
    }
  }
  T forward = T(0), backward = T(0);
  for (T d2 : best_pq) forward += std::sqrt(d2);
  for (T d2 : best_qp) backward += std::sqrt(d2);
  const T value = forward / static_cast<T>(m) + backward / static_cast<T>(l);

  auto sp = predicted.storage();
  auto sq = target.storage();
  const Tensor<T>* inputs[] = {&predicted, &target};
  return ops::custom<T>(
      "chamfer_distance", Shape{}, std::vector<T>{value}, inputs,
      [sp, sq, nearest, back, m, l](std::span<const T> g, std::span<const std::span<T>> gi) {
        const T* P = sp->data();
        const T* Q = sq->data();
        auto pull = [&](std::size_t i, std::size_t j, T weight) {
          T d[3];
          T d2 = T(0);
          for (int a = 0; a < 3; ++a) {
            d[a] = P[3 * i + a] - Q[3 * j + a];
            d2 += d[a] * d[a];
          }
          const T norm = std::sqrt(d2);
          if (norm == T(0)) return;
          for (int a = 0; a < 3; ++a) {
            const T v = weight * d[a] / norm;
            if (!gi[0].empty()) gi[0][3 * i + a] += v;
            if (!gi[1].empty()) gi[1][3 * j + a] -= v;
          }
        };
        for (std::size_t i = 0; i < m; ++i) pull(i, (*nearest)[i], g[0] / static_cast<T>(m));
        for (std::size_t j = 0; j < l; ++j) pull((*back)[j], j, g[0] / static_cast<T>(l));
      });
}

double chamfer_distance(std::span<const Point3> a, std::span<const Point3> b) {
  return chamfer_distance<double>(to_tensor<double>(a), to_tensor<double>(b)).item();
}

Assignment solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw ShapeError("solve_assignment: cost matrix is not n x n");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials formulation; column 0 is a virtual slot.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t row = 1; row <= n; ++row) {
    owner[0] = row;
    std::size_t col0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t r0 = owner[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost[(r0 - 1) * n + (c - 1)] - u[r0] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[owner[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (owner[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      owner[col0] = owner[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  Assignment out;
  out.column_of_row.assign(n, 0);
  for (std::size_t c = 1; c <= n; ++c)
    if (owner[c] != 0) out.column_of_row[owner[c] - 1] = c - 1;
  for (std::size_t r = 0; r < n; ++r) out.cost += cost[r * n + out.column_of_row[r]];
  return out;
}

namespace {

void check_emd_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw UsageError("emd: point sets differ in size (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  if (a == 0) throw UsageError("emd: empty point set");
  if (a > kMaxEmdPoints) {
    throw UsageError("emd: " + std::to_string(a) + " points exceeds the exact-solver limit of " +
                     std::to_string(kMaxEmdPoints));
  }
}

template <typename T>
std::vector<double> distance_matrix(const T* a, const T* b, std::size_t n) {
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double d = static_cast<double>(a[3 * i + k]) - static_cast<double>(b[3 * j + k]);
        d2 += d * d;
      }
      cost[i * n + j] = std::sqrt(d2);
    }
  return cost;
}

}  // namespace

double emd_exact(std::span<const Point3> a, std::span<const Point3> b) {
  check_emd_sizes(a.size(), b.size());
  const std::size_t n = a.size();
  const auto flat = [](std::span<const Point3> pts) {
    std::vector<double> v;
    for (const auto& p : pts) v.insert(v.end(), p.begin(), p.end());
    return v;
  };
  const auto cost = distance_matrix(flat(a).data(), flat(b).data(), n);
  return solve_assignment(cost, n).cost / static_cast<double>(n);
}

template <typename T>
Tensor<T> emd_distance(const Tensor<T>& a, const Tensor<T>& b) {
  check_points_tensor(a.shape(), "emd_distance");
  check_points_tensor(b.shape(), "emd_distance");
  check_emd_sizes(a.dim(0), b.dim(0));
  const std::size_t n = a.dim(0);
  const auto assignment = solve_assignment(distance_matrix(a.data(), b.data(), n), n);
  auto match = std::make_shared<std::vector<std::size_t>>(assignment.column_of_row);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    T d2 = T(0);
    for (int k = 0; k < 3; ++k) {
      const T d = a[3 * i + k] - b[3 * (*match)[i] + k];
      d2 += d * d;
    }
    total += std::sqrt(d2);
  }
  auto sa = a.storage();
  auto sb = b.storage();
  const Tensor<T>* inputs[] = {&a, &b};
  return ops::custom<T>("emd_distance", Shape{}, std::vector<T>{total / static_cast<T>(n)}, inputs,
                        [sa, sb, match, n](std::span<const T> g, std::span<const std::span<T>> gi) {
                          const T w = g[0] / static_cast<T>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            const std::size_t j = (*match)[i];
                            T d[3];
                            T d2 = T(0);
                            for (int k = 0; k < 3; ++k) {
                              d[k] = (*sa)[3 * i + k] - (*sb)[3 * j + k];
                              d2 += d[k] * d[k];
                            }
                            const T norm = std::sqrt(d2);
                            if (norm == T(0)) continue;
                            for (int k = 0; k < 3; ++k) {
                              if (!gi[0].empty()) gi[0][3 * i + k] += w * d[k] / norm;
                              if (!gi[1].empty()) gi[1][3 * j + k] -= w * d[k] / norm;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> to_tensor(std::span<const Point3> points) {
  std::vector<T> v;
  v.reserve(points.size() * 3);
  for (const auto& p : points)
    for (double c : p) v.push_back(static_cast<T>(c));
  return Tensor<T>({points.size(), 3}, std::move(v));
}

template <typename T>
std::vector<Point3> to_points(const Tensor<T>& t) {
  if (t.rank() != 2 || t.dim(1) != 3) throw ShapeError("to_points: expected [n, 3], got " + shape_str(t.shape()));
  std::vector<Point3> out(t.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i)
    for (int a = 0; a < 3; ++a) out[i][a] = static_cast<double>(t[3 * i + a]);
  return out;
}

template Tensor<float> chamfer_distance(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> chamfer_distance(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> emd_distance(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> emd_distance(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> to_tensor(std::span<const Point3>);
template Tensor<double> to_tensor(std::span<const Point3>);
template std::vector<Point3> to_points(const Tensor<float>&);
template std::vector<Point3> to_points(const Tensor<double>&);

}  // namespace oae
