#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oae/geometry.hpp"
#include "oae/model.hpp"

namespace oae {

enum class ShapeCategory { sphere, box, torus, cylinder, cone };

inline constexpr std::array<ShapeCategory, 5> kAllCategories = {
    ShapeCategory::sphere, ShapeCategory::box, ShapeCategory::torus, ShapeCategory::cylinder, ShapeCategory::cone};

std::string to_string(ShapeCategory c);
ShapeCategory parse_shape_category(const std::string& s);

// params by category:
//   sphere:   radius
//   box:      edge lengths x, y, z
//   torus:    major radius, minor radius
//   cylinder: radius, height
//   cone:     base radius, height
struct ShapeSpec {
  ShapeCategory category = ShapeCategory::sphere;
  std::array<double, 3> params{1.0, 1.0, 1.0};
  std::size_t n_points = 1024;
  double jitter = 0.0;

  void validate() const;
};

// Draws category parameters uniformly from the documented ranges.
ShapeSpec random_shape_spec(ShapeCategory category, std::size_t n_points, double jitter, std::uint64_t seed);

// Area-uniform surface samples of the shape centered at its surface centroid,
// Gaussian jitter, then scaled so the farthest point lies on the unit sphere.
// Coordinates are float-representable.
PointCloud generate_synthetic(const ShapeSpec& spec, std::uint64_t seed);

struct AugmentFlags {
  bool rotate = false;
  bool scale = false;
  bool translate = false;
  bool jitter = false;

  bool any() const { return rotate || scale || translate || jitter; }
};

std::string to_string(const AugmentFlags& f);
// Comma-separated subset of rotate,scale,translate,jitter; "none" or empty for no augmentation.
AugmentFlags parse_augment_flags(const std::string& s);

struct AugmentRecord {
  double angle = 0.0;
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  std::array<double, 3> shift{0.0, 0.0, 0.0};
};

PointCloud augment(const PointCloud& cloud, std::uint64_t seed, const AugmentFlags& flags,
                   AugmentRecord* record = nullptr);

enum class CloudFormat { xyz, bin };

CloudFormat format_from_path(const std::filesystem::path& path);
PointCloud load_pointcloud(const std::filesystem::path& path, CloudFormat format);
void save_pointcloud(const std::filesystem::path& path, const PointCloud& cloud, CloudFormat format);
PointCloud load_pointcloud(const std::filesystem::path& path);
void save_pointcloud(const std::filesystem::path& path, const PointCloud& cloud);

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::uint32_t dtype = 0;      // 0 = float32, 1 = float64
  std::vector<double> values;   // widened for inspection
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params);

std::vector<CheckpointTensor> read_checkpoint(const std::filesystem::path& path);

struct CheckpointLoadReport {
  std::vector<std::string> missing;  // registered but not in the file
  std::vector<std::string> extra;    // in the file but not registered
  bool exact() const { return missing.empty() && extra.empty(); }
};

// Strict mode rejects any name-set difference; permissive mode loads the
// intersection and reports the rest.
template <typename T>
CheckpointLoadReport load_checkpoint(const std::filesystem::path& path, ParameterSet<T>& params, bool strict = true);

struct DatasetEntry {
  std::string path;    // relative to the manifest directory
  std::uint64_t seed;  // generation seed
  int label;
  std::string split;   // train or test
};

struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<DatasetEntry> entries;

  void validate() const;
};

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

struct LabeledClouds {
  std::vector<PointCloud> clouds;
  std::vector<int> labels;
};

struct Benchmark {
  std::vector<std::string> classes;
  LabeledClouds train;
  LabeledClouds test;
};

struct BenchmarkConfig {
  std::size_t train_count = 512;
  std::size_t test_count = 128;
  std::size_t n_points = 256;
  double jitter = 0.01;
  std::uint64_t seed = 0;
};

// Class-balanced synthetic benchmark over all five categories.
Benchmark make_benchmark(const BenchmarkConfig& config, DatasetManifest* manifest = nullptr);

// Loads every cloud listed in a manifest (paths relative to its directory).
Benchmark load_benchmark(const std::filesystem::path& manifest_path);

}  // namespace oae
