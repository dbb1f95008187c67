#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oae/data.hpp"
#include "oae/geometry.hpp"
#include "oae/model.hpp"
#include "oae/tensor.hpp"

namespace oae {

enum class LossKind { chamfer, emd };
enum class Schedule { cosine, constant };

std::string to_string(LossKind k);
std::string to_string(Schedule s);
LossKind parse_loss_kind(const std::string& s);
Schedule parse_schedule(const std::string& s);

struct TrainConfig {
  double lr = 5e-4;
  double weight_decay = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::optional<std::size_t> warmup_epochs;  // defaults to 10% of epochs
  Schedule schedule = Schedule::cosine;
  double ratio = 0.75;
  OcclusionStrategy strategy = OcclusionStrategy::random;
  LossKind loss = LossKind::chamfer;
  std::uint64_t seed = 0;
  AugmentFlags augment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t checkpoint_every = 10;  // epochs; 0 writes only the initial and final checkpoints

  std::size_t warmup() const { return warmup_epochs.value_or(epochs / 10); }
  // Throws UsageError naming the violated constraint.
  void validate() const;
};

// Weight-initialization seed derived from the run seed.
std::uint64_t model_init_seed(std::uint64_t run_seed);

// Learning rate for a zero-based optimizer step: linear warmup to lr over
// the warmup steps, then half-cosine decay to zero at total_steps.
double learning_rate(const TrainConfig& config, std::size_t step, std::size_t steps_per_epoch);

// Everything about one training sample that does not depend on the weights.
struct PreparedSample {
  PointCloud cloud;  // normalized
  PatchSet patches;
  OcclusionMask mask;
  std::vector<Point3> target;  // ground-truth points of the occluded patches, patch by patch
};

// normalize, FPS from point 0, KNN grouping, and occlusion with the given seed.
PreparedSample prepare_sample(const PointCloud& cloud, const ModelConfig& model, double ratio,
                              OcclusionStrategy strategy, std::uint64_t mask_seed);

// Reconstruction loss over occluded patches only, from the decoder output [G, C_d].
template <typename T>
Tensor<T> occluded_loss(const OcclusionAutoEncoder<T>& model, const Tensor<T>& decoded, const PreparedSample& sample,
                        LossKind loss);

// Full forward for one prepared sample.
template <typename T>
Tensor<T> sample_loss(const OcclusionAutoEncoder<T>& model, std::span<const Tensor<T>> params,
                      const PreparedSample& sample, LossKind loss);

template <typename T>
struct BatchLoss {
  Tensor<T> loss;                  // mean over the batch
  std::vector<double> per_sample;  // same order as the batch
};

// Sample i of the batch is occluded with mix_seed(rng_seed, i).
template <typename T>
BatchLoss<T> forward_loss(const OcclusionAutoEncoder<T>& model, std::span<const Tensor<T>> params,
                          std::span<const PointCloud> batch, const TrainConfig& config, std::uint64_t rng_seed);

template <typename T>
struct AdamWState {
  std::size_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

// Decoupled weight decay on parameters flagged for decay, then the
// bias-corrected Adam update. Nothing is modified if any gradient is
// non-finite; the error names the first offending parameter.
template <typename T>
void adamw_step(ParameterSet<T>& params, std::span<const std::vector<T>> grads, AdamWState<T>& state, double lr,
                const TrainConfig& config);

struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::string split;  // train or val
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRecord> records);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

struct PretrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no files are written
  std::span<const PointCloud> validation;
  std::function<void(const MetricsRecord&)> on_epoch;  // called with each epoch's mean training record
};

// Deterministic given (model initialization, data, config). Train records are
// per optimizer step; val records are per epoch with fixed masks.
template <typename T>
std::vector<MetricsRecord> pretrain(OcclusionAutoEncoder<T>& model, std::span<const PointCloud> dataset,
                                    const TrainConfig& config, const PretrainOptions& options = {});

// Mean over all G pre-projection encoder tokens with no occlusion.
template <typename T>
std::vector<double> extract_global_feature(const OcclusionAutoEncoder<T>& model, std::span<const Tensor<T>> params,
                                           const PointCloud& cloud);

template <typename T>
std::vector<std::vector<double>> extract_features(const OcclusionAutoEncoder<T>& model,
                                                  std::span<const PointCloud> clouds);

struct ProbeConfig {
  double l2 = 1e-3;
  std::size_t max_iterations = 5000;
  double tolerance = 1e-6;  // on the gradient max-norm
  bool standardize = true;  // z-score with training-set statistics
};

struct ProbeReport {
  std::size_t classes = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t iterations = 0;
  std::vector<std::vector<std::size_t>> confusion;  // test set, [true][predicted]
};

// L2-regularized multinomial logistic regression by full-batch gradient descent.
ProbeReport linear_probe(std::span<const std::vector<double>> train_x, std::span<const int> train_y,
                         std::span<const std::vector<double>> test_x, std::span<const int> test_y,
                         const ProbeConfig& config = {});

// Writes probe.txt, probe.csv (metric,value) and confusion.csv into dir.
void write_probe_report(const std::filesystem::path& dir, const ProbeReport& report,
                        std::span<const std::string> class_names);
std::string format_probe_report(const ProbeReport& report, std::span<const std::string> class_names);

enum class AblationAxis { ratio, strategy, loss, groups, patch_size };
std::string to_string(AblationAxis a);
AblationAxis parse_ablation_axis(const std::string& s);

struct AblationRow {
  std::string axis;
  std::string value;
  bool trained = true;  // false: ratio 0, features taken from the untrained model
  double final_train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Applies one axis value to copies of the base configs. Throws UsageError for invalid values.
void apply_ablation_value(AblationAxis axis, const std::string& value, ModelConfig& model, TrainConfig& train);

// One pretrain + probe per value with shared seeds. Each model is written to
// out_dir/<axis>_<value>/ when out_dir is nonempty.
std::vector<AblationRow> ablate(const ModelConfig& base_model, const TrainConfig& base_train, AblationAxis axis,
                                std::span<const std::string> values, const Benchmark& bench,
                                const ProbeConfig& probe = {}, const std::filesystem::path& out_dir = {});

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows);

}  // namespace oae
