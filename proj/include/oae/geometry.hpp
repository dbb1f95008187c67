#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oae/tensor.hpp"

namespace oae {

using Point3 = std::array<double, 3>;

// Coordinates are kept float32-representable (generation, normalization and
// file loading all round through float), so seed + offset arithmetic in
// double reproduces parent points exactly.
struct PointCloud {
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Throws DataError when empty or when any coordinate is non-finite.
void validate(const PointCloud& cloud);

// Translates the centroid to the origin and scales the farthest point to norm 1.
PointCloud normalize(const PointCloud& cloud);

double squared_distance(const Point3& a, const Point3& b);

// Greedy max-min selection of `count` indices starting at `start`.
// Distance ties resolve to the lowest index.
std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t count, std::size_t start);

// FPS with the start index drawn from `seed`.
std::vector<std::size_t> fps_seeded(const PointCloud& cloud, std::size_t count, std::uint64_t seed);

struct PatchSet {
  std::size_t groups = 0;
  std::size_t patch_size = 0;
  std::vector<Point3> seeds;                 // [groups]
  std::vector<Point3> offsets;               // [groups * patch_size], point - seed
  std::vector<std::size_t> source_indices;   // [groups * patch_size]

  std::span<const Point3> patch(std::size_t g) const {
    return std::span<const Point3>(offsets).subspan(g * patch_size, patch_size);
  }
};

// K nearest points to each seed (the seed itself included, ties to the lower
// index), translated by -seed. Patches may overlap.
PatchSet knn_group_centralize(const PointCloud& cloud, std::span<const std::size_t> seed_indices,
                              std::size_t patch_size);

enum class OcclusionStrategy { random, block };

std::string to_string(OcclusionStrategy s);
OcclusionStrategy parse_occlusion_strategy(const std::string& s);

struct OcclusionMask {
  std::vector<std::size_t> visible;   // sorted
  std::vector<std::size_t> occluded;  // sorted
  OcclusionStrategy strategy = OcclusionStrategy::random;
  double ratio = 0.0;

  std::size_t groups() const { return visible.size() + occluded.size(); }
};

// round(ratio * groups)
std::size_t occluded_count(std::size_t groups, double ratio);

OcclusionMask occlude(std::size_t groups, double ratio, OcclusionStrategy strategy, std::span<const Point3> seeds,
                      std::uint64_t rng_seed);

// Block occlusion around a given anchor: the R seeds nearest it, anchor included.
OcclusionMask occlude_block(std::size_t groups, double ratio, std::span<const Point3> seeds, std::size_t anchor);

// Symmetric Chamfer distance with unsquared L2:
//   mean_p min_q |p - q| + mean_q min_p |p - q|
// Differentiable in both arguments through the forward-time nearest matches.
template <typename T>
Tensor<T> chamfer_distance(const Tensor<T>& predicted, const Tensor<T>& target);

double chamfer_distance(std::span<const Point3> a, std::span<const Point3> b);

struct Assignment {
  std::vector<std::size_t> column_of_row;
  double cost = 0.0;
};

// Exact minimum-cost perfect matching on an n x n row-major cost matrix (Hungarian method, O(n^3)).
Assignment solve_assignment(std::span<const double> cost, std::size_t n);

inline constexpr std::size_t kMaxEmdPoints = 64;

// min over bijections of mean |a_i - b_pi(i)|. Requires equal sizes <= kMaxEmdPoints.
double emd_exact(std::span<const Point3> a, std::span<const Point3> b);

// Differentiable EMD: the optimal matching is solved on forward values and held fixed.
template <typename T>
Tensor<T> emd_distance(const Tensor<T>& a, const Tensor<T>& b);

// Conversions between point lists and [n, 3] tensors.
template <typename T>
Tensor<T> to_tensor(std::span<const Point3> points);

template <typename T>
std::vector<Point3> to_points(const Tensor<T>& t);

}  // namespace oae
