#include "oae/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "oae/errors.hpp"
#include "oae/ops.hpp"
#include "oae/rng.hpp"

namespace oae {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kAugmentStream = 0x61756732;
constexpr std::uint64_t kValStream = 0x76616c31;
constexpr std::uint64_t kInitStream = 0x696e6974;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_trainable_ratio(const ModelConfig& model, double ratio) {
  const std::size_t r = occluded_count(model.groups, ratio);
  if (r == 0) {
    throw UsageError("occlusion ratio " + fmt(ratio) + " leaves no occluded patches among " +
                     std::to_string(model.groups) + "; training needs ratio > 0 (use probe for untrained features)");
  }
  if (r == model.groups) throw UsageError("occlusion ratio " + fmt(ratio) + " leaves no visible patches");
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.oae", epoch);
  return buf;
}

}  // namespace

std::string to_string(LossKind k) { return k == LossKind::chamfer ? "chamfer" : "emd"; }
std::string to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "constant"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "chamfer") return LossKind::chamfer;
  if (s == "emd") return LossKind::emd;
  throw UsageError("unknown loss '" + s + "' (expected chamfer or emd)");
}

Schedule parse_schedule(const std::string& s) {
  if (s == "cosine") return Schedule::cosine;
  if (s == "constant") return Schedule::constant;
  throw UsageError("unknown schedule '" + s + "' (expected cosine or constant)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("train config: " + what); };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(ratio >= 0.0 && ratio < 1.0)) fail("ratio must lie in [0, 1)");
  if (warmup() > epochs) fail("warmup_epochs exceeds epochs");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
}

std::uint64_t model_init_seed(std::uint64_t run_seed) { return mix_seed(run_seed, kInitStream); }

double learning_rate(const TrainConfig& config, std::size_t step, std::size_t steps_per_epoch) {
  if (config.schedule == Schedule::constant) return config.lr;
  const std::size_t warm = config.warmup() * steps_per_epoch;
  const std::size_t total = config.epochs * steps_per_epoch;
  if (step < warm) return config.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  const double span = static_cast<double>(std::max<std::size_t>(total - warm, 1));
  const double progress = std::min(1.0, static_cast<double>(step - warm) / span);
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

PreparedSample prepare_sample(const PointCloud& cloud, const ModelConfig& model, double ratio,
                              OcclusionStrategy strategy, std::uint64_t mask_seed) {
  if (cloud.points.size() < model.groups || cloud.points.size() < model.patch_size) {
    throw DataError("cloud has " + std::to_string(cloud.points.size()) + " points, fewer than G=" +
                    std::to_string(model.groups) + " or K=" + std::to_string(model.patch_size));
  }
  PreparedSample s;
  s.cloud = normalize(cloud);
  s.patches = knn_group_centralize(s.cloud, fps(s.cloud, model.groups, 0), model.patch_size);
  s.mask = occlude(model.groups, ratio, strategy, s.patches.seeds, mask_seed);
  s.target.reserve(s.mask.occluded.size() * model.patch_size);
  for (std::size_t g : s.mask.occluded)
    for (std::size_t k = 0; k < model.patch_size; ++k)
      s.target.push_back(s.cloud.points[s.patches.source_indices[g * model.patch_size + k]]);
  return s;
}

template <typename T>
Tensor<T> occluded_loss(const OcclusionAutoEncoder<T>& model, const Tensor<T>& decoded, const PreparedSample& sample,
                        LossKind loss) {
  const std::size_t r = sample.mask.occluded.size();
  if (r == 0) throw UsageError("reconstruction loss is undefined with no occluded patches");
  const Tensor<T> predicted = model.reconstruct(decoded, sample.mask, seeds_tensor<T>(sample.patches));
  if (loss == LossKind::chamfer) return chamfer_distance(predicted, to_tensor<T>(sample.target));
  const std::size_t k = model.config().patch_size;
  Tensor<T> total;
  for (std::size_t j = 0; j < r; ++j) {
    std::vector<std::size_t> rows(k);
    std::iota(rows.begin(), rows.end(), j * k);
    const auto target = std::span<const Point3>(sample.target).subspan(j * k, k);
    const Tensor<T> d = emd_distance(ops::gather_rows(predicted, rows), to_tensor<T>(target));
    total = j == 0 ? d : ops::add(total, d);
  }
  return ops::scale(total, static_cast<T>(1.0 / static_cast<double>(r)));
}

template <typename T>
Tensor<T> sample_loss(const OcclusionAutoEncoder<T>& model, std::span<const Tensor<T>> params,
                      const PreparedSample& sample, LossKind loss) {
  const auto& s = sample;
  const Tensor<T> encoded = model.encode(params, patches_tensor<T>(s.patches, s.mask.visible),
                                         seeds_tensor<T>(s.patches, s.mask.visible));
  const Tensor<T> decoded = model.decode(params, encoded, s.mask, seeds_tensor<T>(s.patches));
  return occluded_loss(model, decoded, s, loss);
}

template <typename T>
BatchLoss<T> forward_loss(const OcclusionAutoEncoder<T>& model, std::span<const Tensor<T>> params,
                          std::span<const PointCloud> batch, const TrainConfig& config, std::uint64_t rng_seed) {
  if (batch.empty()) throw UsageError("forward_loss: empty batch");
  BatchLoss<T> out;
  Tensor<T> total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto sample = prepare_sample(batch[i], model.config(), config.ratio, config.strategy, mix_seed(rng_seed, i));
    const Tensor<T> l = sample_loss(model, params, sample, config.loss);
    out.per_sample.push_back(static_cast<double>(l.item()));
    total = i == 0 ? l : ops::add(total, l);
  }
  out.loss = ops::scale(total, static_cast<T>(1.0 / static_cast<double>(batch.size())));
  return out;
}

template <typename T>
void adamw_step(ParameterSet<T>& params, std::span<const std::vector<T>> grads, AdamWState<T>& state, double lr,
                const TrainConfig& config) {
  if (grads.size() != params.size()) {
    throw UsageError("adamw_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value.size()) {
      throw ShapeError("adamw_step: gradient for '" + params[i].name + "' has " + std::to_string(grads[i].size()) +
                       " values, parameter has " + std::to_string(params[i].value.size()));
    }
    for (T g : grads[i])
      if (!std::isfinite(g)) throw NumericError("adamw_step: non-finite gradient for parameter '" + params[i].name + "'");
  }
  if (state.first_moment.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment.emplace_back(params[i].value.size(), T(0));
      state.second_moment.emplace_back(params[i].value.size(), T(0));
    }
  }
  state.step += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(b1, t);
  const double bc2 = 1.0 - std::pow(b2, t);
  const double step_size = lr / bc1;
  const double bc2_sqrt = std::sqrt(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].value.mutable_values();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const double decay = params[i].decay ? 1.0 - lr * config.weight_decay : 1.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grads[i][j];
      double th = static_cast<double>(theta[j]) * decay;
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * g;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      th -= step_size * mj / (std::sqrt(vj) / bc2_sqrt + config.adam_eps);
      theta[j] = static_cast<T>(th);
    }
  }
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "step,epoch,split,loss,lr,wall_ms\n";
  for (const auto& r : records) {
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", r.wall_ms);
    out << r.step << ',' << r.epoch << ',' << r.split << ',' << fmt(r.loss) << ',' << fmt(r.lr) << ',' << wall << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  std::string line;
  if (!std::getline(in, line) || line != "step,epoch,split,loss,lr,wall_ms") {
    throw DataError(path.string() + ": missing metrics header");
  }
  std::vector<MetricsRecord> out;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw DataError(path.string() + ": line " + std::to_string(number) + ": expected 6 fields");
    try {
      out.push_back({std::stoull(f[0]), std::stoull(f[1]), f[2], std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": line " + std::to_string(number) + ": malformed number");
    }
  }
  return out;
}

template <typename T>
std::vector<MetricsRecord> pretrain(OcclusionAutoEncoder<T>& model, std::span<const PointCloud> dataset,
                                    const TrainConfig& config, const PretrainOptions& options) {
  config.validate();
  model.config().validate();
  if (dataset.empty()) throw UsageError("pretrain: dataset is empty");
  if (config.epochs > 0) check_trainable_ratio(model.config(), config.ratio);

  const auto& dir = options.checkpoint_dir;
  std::filesystem::path last_good;
  auto checkpoint = [&](const std::string& name) {
    if (dir.empty()) return;
    save_checkpoint(dir / name, model.parameters());
    last_good = dir / name;
  };
  if (!dir.empty()) std::filesystem::create_directories(dir);
  checkpoint(checkpoint_name(0));

  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  const std::size_t n = dataset.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  std::vector<MetricsRecord> records;
  AdamWState<T> state;
  std::size_t step = 0;
  double lr = learning_rate(config, 0, steps_per_epoch);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(mix_seed(config.seed, kShuffleStream, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_sum = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size) {
      const std::size_t b1 = std::min(n, b0 + config.batch_size);
      lr = learning_rate(config, step, steps_per_epoch);
      Tape<T> tape;
      const auto params = model.bind(tape);
      Tensor<T> total;
      for (std::size_t i = b0; i < b1; ++i) {
        const std::size_t idx = order[i];
        const std::uint64_t sample_seed = mix_seed(config.seed, epoch, idx);
        const PointCloud cloud = config.augment.any()
                                     ? augment(dataset[idx], mix_seed(sample_seed, kAugmentStream), config.augment)
                                     : dataset[idx];
        const auto sample = prepare_sample(cloud, model.config(), config.ratio, config.strategy, sample_seed);
        const Tensor<T> l = sample_loss<T>(model, params, sample, config.loss);
        total = i == b0 ? l : ops::add(total, l);
      }
      const Tensor<T> loss = ops::scale(total, static_cast<T>(1.0 / static_cast<double>(b1 - b0)));
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        if (!dir.empty()) write_metrics_csv(dir / "metrics.csv", records);
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step + 1) +
                           (last_good.empty() ? std::string() : "; last good checkpoint " + last_good.string()));
      }
      tape.backward(loss);
      std::vector<std::vector<T>> grads;
      grads.reserve(params.size());
      for (const auto& p : params) grads.push_back(tape.grad(p));
      adamw_step<T>(model.parameters(), grads, state, lr, config);
      ++step;
      records.push_back({step, epoch, "train", value, lr, elapsed_ms()});
      epoch_sum += value * static_cast<double>(b1 - b0);
    }
    if (options.on_epoch) options.on_epoch({step, epoch, "train", epoch_sum / static_cast<double>(n), lr, elapsed_ms()});

    if (!options.validation.empty()) {
      const auto params = model.values();
      double sum = 0.0;
      for (std::size_t i = 0; i < options.validation.size(); ++i) {
        const auto sample = prepare_sample(options.validation[i], model.config(), config.ratio, config.strategy,
                                           mix_seed(config.seed, kValStream, i));
        sum += static_cast<double>(sample_loss<T>(model, params, sample, config.loss).item());
      }
      records.push_back({step, epoch, "val", sum / static_cast<double>(options.validation.size()), lr, elapsed_ms()});
    }
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) checkpoint(checkpoint_name(epoch));
  }
  checkpoint("final.oae");
  if (!dir.empty()) write_metrics_csv(dir / "metrics.csv", records);
  return records;
}

template <typename T>
std::vector<double> extract_global_feature(const OcclusionAutoEncoder<T>& model, std::span<const Tensor<T>> params,
                                           const PointCloud& cloud) {
  const auto& c = model.config();
  if (cloud.points.size() < c.groups || cloud.points.size() < c.patch_size) {
    throw DataError("cloud has " + std::to_string(cloud.points.size()) + " points, fewer than G=" +
                    std::to_string(c.groups) + " or K=" + std::to_string(c.patch_size));
  }
  const PointCloud norm = normalize(cloud);
  const PatchSet patches = knn_group_centralize(norm, fps(norm, c.groups, 0), c.patch_size);
  std::vector<std::size_t> all(c.groups);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Tensor<T> tokens = model.encode_tokens(params, patches_tensor<T>(patches, all), seeds_tensor<T>(patches));
  const Tensor<T> mean = ops::mean_axis(tokens, 0);
  return std::vector<double>(mean.values().begin(), mean.values().end());
}

template <typename T>
std::vector<std::vector<double>> extract_features(const OcclusionAutoEncoder<T>& model,
                                                  std::span<const PointCloud> clouds) {
  const auto params = model.values();
  std::vector<std::vector<double>> out;
  out.reserve(clouds.size());
  for (const auto& c : clouds) out.push_back(extract_global_feature<T>(model, params, c));
  return out;
}

ProbeReport linear_probe(std::span<const std::vector<double>> train_x, std::span<const int> train_y,
                         std::span<const std::vector<double>> test_x, std::span<const int> test_y,
                         const ProbeConfig& config) {
  if (train_x.size() != train_y.size() || test_x.size() != test_y.size()) {
    throw UsageError("linear_probe: features and labels differ in length");
  }
  if (train_x.empty()) throw UsageError("linear_probe: empty training set");
  const std::size_t dim = train_x[0].size();
  int max_label = 0;
  for (int y : train_y) {
    if (y < 0) throw UsageError("linear_probe: negative label");
    max_label = std::max(max_label, y);
  }
  for (int y : test_y) {
    if (y < 0) throw UsageError("linear_probe: negative label");
    max_label = std::max(max_label, y);
  }
  if (std::all_of(train_y.begin(), train_y.end(), [&](int y) { return y == train_y[0]; })) {
    throw UsageError("linear_probe: training labels contain a single class; at least two are required");
  }
  for (const auto& x : train_x)
    if (x.size() != dim) throw ShapeError("linear_probe: ragged training features");
  for (const auto& x : test_x)
    if (x.size() != dim) throw ShapeError("linear_probe: test features do not match training dimension");

  const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
  const std::size_t n = train_x.size();
  const std::size_t d = dim + 1;  // trailing bias column

  std::vector<double> mean(dim, 0.0), inv_sd(dim, 1.0);
  if (config.standardize) {
    for (const auto& x : train_x)
      for (std::size_t j = 0; j < dim; ++j) mean[j] += x[j] / static_cast<double>(n);
    for (std::size_t j = 0; j < dim; ++j) {
      double var = 0.0;
      for (const auto& x : train_x) var += (x[j] - mean[j]) * (x[j] - mean[j]);
      const double sd = std::sqrt(var / static_cast<double>(n));
      inv_sd[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
  }
  auto design = [&](std::span<const std::vector<double>> xs) {
    std::vector<double> m(xs.size() * d);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) m[i * d + j] = (xs[i][j] - mean[j]) * inv_sd[j];
      m[i * d + dim] = 1.0;
    }
    return m;
  };
  const std::vector<double> xtr = design(train_x);
  const std::vector<double> xte = design(test_x);

  // Step 1/L with L bounding the Hessian: 0.5 * lambda_max(X^T X / n) + l2.
  std::vector<double> u(d, 1.0 / std::sqrt(static_cast<double>(d))), w(d);
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += xtr[i * d + j] * u[j];
      for (std::size_t j = 0; j < d; ++j) w[j] += xtr[i * d + j] * s / static_cast<double>(n);
    }
    double norm = 0.0;
    for (double v : w) norm += v * v;
    norm = std::sqrt(norm);
    lambda = norm;
    if (norm == 0.0) break;
    for (std::size_t j = 0; j < d; ++j) u[j] = w[j] / norm;
  }
  const double step = 1.0 / (0.5 * lambda * 1.05 + config.l2);

  std::vector<double> grad(d * classes), probs(classes);
  auto gradient = [&](const std::vector<double>& wts) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = &xtr[i * d];
      double top = -INFINITY;
      for (std::size_t c = 0; c < classes; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += x[j] * wts[j * classes + c];
        probs[c] = s;
        top = std::max(top, s);
      }
      double z = 0.0;
      for (double& p : probs) {
        p = std::exp(p - top);
        z += p;
      }
      for (std::size_t c = 0; c < classes; ++c) {
        const double r = (probs[c] / z - (static_cast<int>(c) == train_y[i] ? 1.0 : 0.0)) / static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j) grad[j * classes + c] += x[j] * r;
      }
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t c = 0; c < classes; ++c) {
        double& g = grad[j * classes + c];
        if (j < dim) g += config.l2 * wts[j * classes + c];
        worst = std::max(worst, std::abs(g));
      }
    return worst;
  };

  // Nesterov-accelerated gradient descent with gradient-based momentum restart.
  std::vector<double> weights(d * classes, 0.0), lookahead = weights, next(weights.size());
  double momentum = 1.0;
  ProbeReport report;
  report.classes = classes;
  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    const double worst = gradient(lookahead);
    report.iterations = it + 1;
    if (worst < config.tolerance) {
      weights = lookahead;
      break;
    }
    double direction = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      next[k] = lookahead[k] - step * grad[k];
      direction += grad[k] * (next[k] - weights[k]);
    }
    if (direction > 0.0) {
      momentum = 1.0;
      lookahead = weights;
      continue;
    }
    const double following = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const double beta = (momentum - 1.0) / following;
    for (std::size_t k = 0; k < weights.size(); ++k) lookahead[k] = next[k] + beta * (next[k] - weights[k]);
    weights.swap(next);
    momentum = following;
  }

  auto predict = [&](const double* x) {
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t c = 0; c < classes; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += x[j] * weights[j * classes + c];
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    return best;
  };
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += predict(&xtr[i * d]) == static_cast<std::size_t>(train_y[i]) ? 1 : 0;
  report.train_accuracy = static_cast<double>(hits) / static_cast<double>(n);
  report.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  hits = 0;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    const std::size_t p = predict(&xte[i * d]);
    report.confusion[static_cast<std::size_t>(test_y[i])][p] += 1;
    hits += p == static_cast<std::size_t>(test_y[i]) ? 1 : 0;
  }
  report.test_accuracy = test_x.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(test_x.size());
  return report;
}

namespace {

std::string class_name(std::span<const std::string> names, std::size_t c) {
  return c < names.size() ? names[c] : "class" + std::to_string(c);
}

}  // namespace

std::string format_probe_report(const ProbeReport& report, std::span<const std::string> class_names) {
  std::ostringstream out;
  char buf[96];
  std::snprintf(buf, sizeof buf, "train accuracy: %.4f\ntest accuracy:  %.4f\n", report.train_accuracy,
                report.test_accuracy);
  out << buf << "iterations:     " << report.iterations << "\nconfusion (rows true, columns predicted):\n";
  std::size_t width = 8;
  for (std::size_t c = 0; c < report.classes; ++c) width = std::max(width, class_name(class_names, c).size() + 1);
  auto cell = [&](const std::string& s) {
    out << s;
    for (std::size_t i = s.size(); i < width; ++i) out << ' ';
  };
  cell("");
  for (std::size_t c = 0; c < report.classes; ++c) cell(class_name(class_names, c));
  out << '\n';
  for (std::size_t t = 0; t < report.classes; ++t) {
    cell(class_name(class_names, t));
    for (std::size_t p = 0; p < report.classes; ++p) cell(std::to_string(report.confusion[t][p]));
    out << '\n';
  }
  return out.str();
}

void write_probe_report(const std::filesystem::path& dir, const ProbeReport& report,
                        std::span<const std::string> class_names) {
  std::filesystem::create_directories(dir);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw DataError(p.string() + ": cannot open for writing");
    return out;
  };
  {
    auto out = open(dir / "probe.txt");
    out << format_probe_report(report, class_names);
  }
  {
    auto out = open(dir / "probe.csv");
    out << "metric,value\n"
        << "classes," << report.classes << "\n"
        << "train_accuracy," << fmt(report.train_accuracy) << "\n"
        << "test_accuracy," << fmt(report.test_accuracy) << "\n"
        << "iterations," << report.iterations << "\n";
  }
  auto out = open(dir / "confusion.csv");
  out << "true";
  for (std::size_t c = 0; c < report.classes; ++c) out << ',' << class_name(class_names, c);
  out << '\n';
  for (std::size_t t = 0; t < report.classes; ++t) {
    out << class_name(class_names, t);
    for (std::size_t p = 0; p < report.classes; ++p) out << ',' << report.confusion[t][p];
    out << '\n';
  }
}

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::ratio: return "ratio";
    case AblationAxis::strategy: return "strategy";
    case AblationAxis::loss: return "loss";
    case AblationAxis::groups: return "groups";
    case AblationAxis::patch_size: return "patch_size";
  }
  return "?";
}

AblationAxis parse_ablation_axis(const std::string& s) {
  for (auto a : {AblationAxis::ratio, AblationAxis::strategy, AblationAxis::loss, AblationAxis::groups,
                 AblationAxis::patch_size})
    if (to_string(a) == s) return a;
  throw UsageError("unknown ablation axis '" + s + "'");
}

void apply_ablation_value(AblationAxis axis, const std::string& value, ModelConfig& model, TrainConfig& train) {
  auto number = [&](auto parse) {
    try {
      std::size_t used = 0;
      const auto v = parse(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::logic_error&) {
      throw UsageError("ablation: '" + value + "' is not a valid " + to_string(axis) + " value");
    }
  };
  ModelConfig m = model;
  TrainConfig t = train;
  switch (axis) {
    case AblationAxis::ratio:
      t.ratio = number([](const std::string& s, std::size_t* u) { return std::stod(s, u); });
      break;
    case AblationAxis::strategy: t.strategy = parse_occlusion_strategy(value); break;
    case AblationAxis::loss: t.loss = parse_loss_kind(value); break;
    case AblationAxis::groups:
      m.groups = number([](const std::string& s, std::size_t* u) { return std::stoul(s, u); });
      break;
    case AblationAxis::patch_size:
      m.patch_size = number([](const std::string& s, std::size_t* u) { return std::stoul(s, u); });
      m.decoder_dim = 3 * m.patch_size;
      break;
  }
  t.validate();
  m.validate();
  model = m;
  train = t;
}

std::vector<AblationRow> ablate(const ModelConfig& base_model, const TrainConfig& base_train, AblationAxis axis,
                                std::span<const std::string> values, const Benchmark& bench, const ProbeConfig& probe,
                                const std::filesystem::path& out_dir) {
  if (values.empty()) throw UsageError("ablation: no values given");
  std::vector<std::pair<ModelConfig, TrainConfig>> configs;
  for (const auto& v : values) {
    ModelConfig m = base_model;
    TrainConfig t = base_train;
    apply_ablation_value(axis, v, m, t);
    if (t.ratio > 0.0 && t.epochs > 0) check_trainable_ratio(m, t.ratio);
    configs.emplace_back(m, t);
  }
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& [m, t] = configs[i];
    OcclusionAutoEncoder<float> model(m, model_init_seed(t.seed));
    AblationRow row;
    row.axis = to_string(axis);
    row.value = values[i];
    row.trained = occluded_count(m.groups, t.ratio) > 0;
    PretrainOptions opts;
    if (!out_dir.empty()) opts.checkpoint_dir = out_dir / (row.axis + "_" + values[i]);
    if (row.trained) {
      const auto records = pretrain(model, bench.train.clouds, t, opts);
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& r : records)
        if (r.split == "train" && r.epoch == t.epochs) {
          sum += r.loss;
          ++count;
        }
      row.final_train_loss = count ? sum / static_cast<double>(count) : 0.0;
    } else if (!opts.checkpoint_dir.empty()) {
      std::filesystem::create_directories(opts.checkpoint_dir);
      save_checkpoint(opts.checkpoint_dir / "final.oae", model.parameters());
    }
    const auto train_features = extract_features(model, bench.train.clouds);
    const auto test_features = extract_features(model, bench.test.clouds);
    const auto report = linear_probe(train_features, bench.train.labels, test_features, bench.test.labels, probe);
    row.train_accuracy = report.train_accuracy;
    row.test_accuracy = report.test_accuracy;
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "axis,value,trained,final_train_loss,train_accuracy,test_accuracy\n";
  for (const auto& r : rows) {
    out << r.axis << ',' << r.value << ',' << (r.trained ? "yes" : "no (probe-only)") << ','
        << (r.trained ? fmt(r.final_train_loss) : std::string()) << ',' << fmt(r.train_accuracy) << ','
        << fmt(r.test_accuracy) << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

#define OAE_INSTANTIATE(T)                                                                                           \
  template Tensor<T> occluded_loss(const OcclusionAutoEncoder<T>&, const Tensor<T>&, const PreparedSample&,         \
                                   LossKind);                                                                        \
  template Tensor<T> sample_loss(const OcclusionAutoEncoder<T>&, std::span<const Tensor<T>>, const PreparedSample&, \
                                 LossKind);                                                                          \
  template BatchLoss<T> forward_loss(const OcclusionAutoEncoder<T>&, std::span<const Tensor<T>>,                    \
                                     std::span<const PointCloud>, const TrainConfig&, std::uint64_t);                \
  template void adamw_step(ParameterSet<T>&, std::span<const std::vector<T>>, AdamWState<T>&, double,               \
                           const TrainConfig&);                                                                      \
  template std::vector<MetricsRecord> pretrain(OcclusionAutoEncoder<T>&, std::span<const PointCloud>,               \
                                               const TrainConfig&, const PretrainOptions&);                          \
  template std::vector<double> extract_global_feature(const OcclusionAutoEncoder<T>&, std::span<const Tensor<T>>,   \
                                                      const PointCloud&);                                            \
  template std::vector<std::vector<double>> extract_features(const OcclusionAutoEncoder<T>&,                        \
                                                             std::span<const PointCloud>);

OAE_INSTANTIATE(float)
OAE_INSTANTIATE(double)

}  // namespace oae
