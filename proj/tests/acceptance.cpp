#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oae/cli.hpp"
#include "oae/data.hpp"
#include "oae/errors.hpp"
#include "oae/geometry.hpp"
#include "oae/grad_check.hpp"
#include "oae/model.hpp"
#include "oae/ops.hpp"
#include "oae/pipeline.hpp"
#include "oae/rng.hpp"
#include "test_util.hpp"

using namespace oae;
using oae::testing::random_cloud;
using oae::testing::random_tensor;
using oae::testing::slurp;
namespace fs = std::filesystem;
using T = Tensor<double>;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool report(int n, const char* title, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("criterion %d [PRIMARY] %s: %s (%s)\n", n, title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

// ---------------------------------------------------------------- criterion 1

T project(const T& t, std::uint64_t seed) { return ops::sum(ops::mul(t, random_tensor(t.shape(), seed))); }

ModelConfig toy_config() {
  ModelConfig c;
  c.points = 64;
  c.groups = 8;
  c.patch_size = 4;
  c.encoder_dim = 16;
  c.decoder_dim = 12;
  c.encoder_depth = 2;
  c.decoder_depth = 2;
  c.heads = 2;
  c.embed_hidden = 8;
  return c;
}

template <typename M>
void randomize(M& m, std::uint64_t seed, double range = 0.6) {
  Rng rng(seed);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    for (auto& x : m.parameters()[i].value.mutable_values())
      x = static_cast<std::decay_t<decltype(x)>>(rng.uniform(-range, range));
}

// The pinned gradient-check point: attention logits of order one.
void grad_check_point(OcclusionAutoEncoder<double>& m) {
  randomize(m, 4);
  Rng rng(5);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& name = m.parameters()[i].name;
    if (name.ends_with(".query") || name.ends_with(".key"))
      for (double& x : m.parameters()[i].value.mutable_values()) x = rng.uniform(-2.0, 2.0);
  }
}

Outcome autodiff_soundness() {
  const auto t0 = Clock::now();
  const T b34 = random_tensor({3, 4}, 11), x23 = random_tensor({2, 3}, 12), y23 = random_tensor({2, 3}, 13);
  const T g3 = random_tensor({3}, 14), row3 = random_tensor({3}, 15);
  const T p53 = random_tensor({5, 3}, 16), q73 = random_tensor({7, 3}, 17), q53 = random_tensor({5, 3}, 18);
  const std::vector<std::pair<const char*, std::function<GradCheckReport()>>> op_checks = {
      {"matmul", [&] { return grad_check([&](const T& x) { return project(ops::matmul(x, b34), 1); }, x23, 1e-6, 1e-4); }},
      {"matmul rhs", [&] { return grad_check([&](const T& b) { return project(ops::matmul(x23, b), 2); }, b34, 1e-6, 1e-4); }},
      {"add", [&] { return grad_check([&](const T& x) { return project(ops::add(x, y23), 3); }, x23, 1e-6, 1e-4); }},
      {"sub", [&] { return grad_check([&](const T& x) { return project(ops::sub(y23, x), 4); }, x23, 1e-6, 1e-4); }},
      {"mul", [&] { return grad_check([&](const T& x) { return project(ops::mul(x, y23), 5); }, x23, 1e-6, 1e-4); }},
      {"scale", [&] { return grad_check([&](const T& x) { return project(ops::scale(x, -1.7), 6); }, x23, 1e-6, 1e-4); }},
      {"softmax_rows", [&] { return grad_check([&](const T& x) { return project(ops::softmax_rows(x), 7); }, x23, 1e-6, 1e-4); }},
      {"layer_norm", [&] { return grad_check([&](const T& x) { return project(ops::layer_norm(x, g3, row3, 1e-5), 8); }, x23, 1e-6, 1e-4); }},
      {"layer_norm gamma", [&] { return grad_check([&](const T& g) { return project(ops::layer_norm(x23, g, row3, 1e-5), 9); }, g3, 1e-6, 1e-4); }},
      {"layer_norm beta", [&] { return grad_check([&](const T& b) { return project(ops::layer_norm(x23, g3, b, 1e-5), 10); }, row3, 1e-6, 1e-4); }},
      {"gelu", [&] { return grad_check([&](const T& x) { return project(ops::gelu(x), 11); }, x23, 1e-6, 1e-4); }},
      {"max_axis", [&] { return grad_check([&](const T& x) { return project(ops::max_axis(x, 1).values, 12); }, x23, 1e-6, 1e-4); }},
      {"mean_axis", [&] { return grad_check([&](const T& x) { return project(ops::mean_axis(x, 0), 13); }, x23, 1e-6, 1e-4); }},
      {"sum", [&] { return grad_check([&](const T& x) { return ops::sum(ops::mul(x, x)); }, x23, 1e-6, 1e-4); }},
      {"mean", [&] { return grad_check([&](const T& x) { return ops::mean(ops::mul(x, x)); }, x23, 1e-6, 1e-4); }},
      {"reshape", [&] { return grad_check([&](const T& x) { return project(ops::reshape(x, {3, 2}), 14); }, x23, 1e-6, 1e-4); }},
      {"transpose", [&] { return grad_check([&](const T& x) { return project(ops::transpose(x), 15); }, x23, 1e-6, 1e-4); }},
      {"concat", [&] {
         return grad_check([&](const T& x) { const T parts[] = {y23, x, x}; return project(ops::concat<double>(parts, 0), 16); }, x23, 1e-6, 1e-4);
       }},
      {"gather_rows", [&] {
         return grad_check([&](const T& x) { const std::size_t idx[] = {1, 1, 0}; return project(ops::gather_rows(x, idx), 17); }, x23, 1e-6, 1e-4);
       }},
      {"add_row", [&] { return grad_check([&](const T& x) { return project(ops::add_row(x, row3), 18); }, x23, 1e-6, 1e-4); }},
      {"add_row row", [&] { return grad_check([&](const T& r) { return project(ops::add_row(x23, r), 19); }, row3, 1e-6, 1e-4); }},
      {"chamfer predicted", [&] { return grad_check([&](const T& p) { return chamfer_distance(p, q73); }, p53, 1e-6, 1e-4); }},
      {"chamfer target", [&] { return grad_check([&](const T& q) { return chamfer_distance(p53, q); }, q73, 1e-6, 1e-4); }},
      {"emd", [&] { return grad_check([&](const T& p) { return emd_distance(p, q53); }, p53, 1e-6, 1e-4); }},
      {"emd target", [&] { return grad_check([&](const T& q) { return emd_distance(p53, q); }, q53, 1e-6, 1e-4); }},
  };
  double worst_op = 0.0;
  std::string failed;
  for (const auto& [name, run] : op_checks) {
    const auto r = run();
    worst_op = std::max(worst_op, r.max_rel_error);
    if (!r.pass) failed += std::string(failed.empty() ? "" : ",") + name;
  }

  const auto c = toy_config();
  OcclusionAutoEncoder<double> m(c, 3);
  grad_check_point(m);
  std::vector<PointCloud> clouds{random_cloud(64, 50), random_cloud(64, 51)};
  TrainConfig t;
  t.ratio = 0.5;
  t.batch_size = 4;
  t.seed = 11;
  const auto base = m.values();
  double worst_loss = 0.0;
  std::size_t checked = 0;
  for (LossKind kind : {LossKind::chamfer, LossKind::emd}) {
    t.loss = kind;
    for (std::size_t i = 0; i < base.size(); ++i) {
      auto f = [&](const T& x) {
        std::vector<T> p = base;
        p[i] = x;
        return forward_loss<double>(m, p, clouds, t, 7).loss;
      };
      std::vector<std::size_t> coords;
      for (std::size_t j = 0; j < base[i].size() && coords.size() < 4; j += 1 + base[i].size() / 4) coords.push_back(j);
      const auto r = grad_check(f, base[i], 1e-6, 1e-3, coords);
      checked += coords.size();
      worst_loss = std::max(worst_loss, r.max_rel_error);
      if (!r.pass) failed += std::string(failed.empty() ? "" : ",") + to_string(kind) + ":" + m.parameters()[i].name;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = failed.empty() && worst_op <= 1e-4 && worst_loss <= 1e-3 && secs < 60.0;
  return {pass, fmt("%zu ops max rel %.2e <= 1e-4; full loss %zu coords over %zu tensors max rel %.2e <= 1e-3; %.1f s < 60 s%s%s",
                    op_checks.size(), worst_op, checked, base.size(), worst_loss, secs,
                    failed.empty() ? "" : "; failed: ", failed.c_str())};
}

// ---------------------------------------------------------------- criterion 2

double oracle_chamfer(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  auto one = [](const std::vector<Point3>& x, const std::vector<Point3>& y) {
    double s = 0.0;
    for (const auto& p : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : y) {
        const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      s += best;
    }
    return s / static_cast<double>(x.size());
  };
  return one(a, b) + one(b, a);
}

double oracle_emd(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& p = a[i];
      const auto& q = b[perm[i]];
      s += std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]));
    }
    best = std::min(best, s / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<std::size_t> oracle_fps(const std::vector<Point3>& pts, std::size_t count, std::size_t start) {
  std::vector<std::size_t> chosen{start};
  while (chosen.size() < count) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t s : chosen) d = std::min(d, squared_distance(pts[i], pts[s]));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

std::vector<Point3> random_points(Rng& rng, std::size_t n, bool grid) {
  std::vector<Point3> pts(n);
  for (auto& p : pts)
    for (double& v : p) v = grid ? 0.25 * static_cast<double>(rng.below(9)) - 1.0 : rng.uniform(-1.0, 1.0);
  return pts;
}

Outcome geometry_oracles() {
  Rng rng(2024);
  double chamfer_err = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto a = random_points(rng, 1 + rng.below(40), false);
    const auto b = random_points(rng, 1 + rng.below(40), false);
    const double want = oracle_chamfer(a, b);
    chamfer_err = std::max(chamfer_err, std::abs(chamfer_distance(a, b) - want));
    chamfer_err = std::max(chamfer_err, std::abs(chamfer_distance(to_tensor<double>(a), to_tensor<double>(b)).item() - want));
  }
  double emd_err = 0.0;
  std::size_t emd_count = 0;
  for (std::size_t n = 1; n <= 6; ++n)
    for (int i = 0; i < 30; ++i, ++emd_count) {
      const auto a = random_points(rng, n, false);
      const auto b = random_points(rng, n, false);
      const double want = oracle_emd(a, b);
      emd_err = std::max(emd_err, std::abs(emd_exact(a, b) - want));
      emd_err = std::max(emd_err, std::abs(emd_distance(to_tensor<double>(a), to_tensor<double>(b)).item() - want));
    }
  std::size_t fps_bad = 0, knn_bad = 0;
  for (int i = 0; i < 100; ++i) {
    const bool grid = i % 2 == 1;  // lattice points give exact distance ties
    const std::size_t n = 5 + rng.below(150);
    const PointCloud cloud{random_points(rng, n, grid)};
    const std::size_t count = 1 + rng.below(std::min<std::size_t>(n, 32));
    const std::size_t start = i % 3 == 0 ? 0 : rng.below(n);
    const auto got = fps(cloud, count, start);
    if (got != oracle_fps(cloud.points, count, start)) ++fps_bad;

    const std::size_t k = 1 + rng.below(n);
    const auto patches = knn_group_centralize(cloud, got, k);
    bool ok = patches.groups == count && patches.patch_size == k;
    for (std::size_t g = 0; ok && g < count; ++g) {
      const Point3 seed = cloud.points[got[g]];
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const double dx = squared_distance(cloud.points[x], seed), dy = squared_distance(cloud.points[y], seed);
        return dx < dy || (dx == dy && x < y);
      });
      ok = ok && patches.seeds[g] == seed;
      for (std::size_t j = 0; ok && j < k; ++j) {
        const Point3& p = cloud.points[order[j]];
        const Point3 off{p[0] - seed[0], p[1] - seed[1], p[2] - seed[2]};
        ok = patches.source_indices[g * k + j] == order[j] && patches.offsets[g * k + j] == off;
      }
    }
    if (!ok) ++knn_bad;
  }
  const bool pass = chamfer_err <= 1e-9 && emd_err <= 1e-9 && fps_bad == 0 && knn_bad == 0;
  return {pass, fmt("chamfer 200 instances max err %.1e <= 1e-9; emd n<=6 %zu instances max err %.1e <= 1e-9; "
                    "fps mismatches %zu/100; knn mismatches %zu/100",
                    chamfer_err, emd_count, emd_err, fps_bad, knn_bad)};
}

// ---------------------------------------------------------------- criterion 3

Outcome architecture_invariants() {
  const auto c = toy_config();
  OcclusionAutoEncoder<double> m(c, 8);
  randomize(m, 9);
  const auto p = m.values();
  Rng rng(77);
  const std::size_t g = c.groups, k = c.patch_size;

  std::size_t embed_bad = 0;
  double equivariance = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto patches = random_tensor({g, k, 3}, 100 + trial);
    const auto seeds = random_tensor({g, 3}, 200 + trial);
    std::vector<double> shuffled(patches.size());
    for (std::size_t a = 0; a < g; ++a) {
      std::vector<std::size_t> perm(k);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t j = k; j > 1; --j) std::swap(perm[j - 1], perm[rng.below(j)]);
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t d = 0; d < 3; ++d) shuffled[(a * k + j) * 3 + d] = patches[(a * k + perm[j]) * 3 + d];
    }
    const auto e1 = m.patch_embed(p, patches);
    const auto e2 = m.patch_embed(p, T({g, k, 3}, shuffled));
    for (std::size_t i = 0; i < e1.size(); ++i)
      if (!same_bits(e1[i], e2[i])) ++embed_bad;

    std::vector<std::size_t> perm(g);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t j = g; j > 1; --j) std::swap(perm[j - 1], perm[rng.below(j)]);
    const auto out = m.encode(p, patches, seeds);
    const auto out_perm = m.encode(p, ops::gather_rows(patches, perm), ops::gather_rows(seeds, perm));
    const std::size_t w = out.shape()[1];
    for (std::size_t r = 0; r < g; ++r)
      for (std::size_t j = 0; j < w; ++j)
        equivariance = std::max(equivariance, std::abs(out_perm[r * w + j] - out[perm[r] * w + j]));
  }

  std::size_t zero_bad = 0;
  for (int trial = 0; trial < 4; ++trial) {
    const auto sample = prepare_sample(random_cloud(64, 300 + trial), c, 0.5, OcclusionStrategy::random, 400 + trial);
    std::vector<double> keep(g * c.decoder_dim, 1.0);
    for (std::size_t v : sample.mask.visible)
      for (std::size_t j = 0; j < c.decoder_dim; ++j) keep[v * c.decoder_dim + j] = 0.0;
    const T keep_t({g, c.decoder_dim}, keep);
    for (LossKind kind : {LossKind::chamfer, LossKind::emd}) {
      auto run = [&](bool zero_visible) {
        Tape<double> tape;
        const auto q = m.bind(tape);
        const auto enc = m.encode(q, patches_tensor<double>(sample.patches, sample.mask.visible),
                                  seeds_tensor<double>(sample.patches, sample.mask.visible));
        auto dec = m.decode(q, enc, sample.mask, seeds_tensor<double>(sample.patches));
        if (zero_visible) dec = ops::mul(dec, keep_t);
        const auto loss = occluded_loss(m, dec, sample, kind);
        tape.backward(loss);
        std::vector<double> all{loss.item()};
        for (const auto& x : q) {
          const auto gr = tape.grad(x);
          all.insert(all.end(), gr.begin(), gr.end());
        }
        return all;
      };
      const auto a = run(false), b = run(true);
      for (std::size_t i = 0; i < a.size(); ++i)
        if (!same_bits(a[i], b[i])) ++zero_bad;
    }
  }
  const bool pass = embed_bad == 0 && equivariance <= 1e-10 && zero_bad == 0;
  return {pass, fmt("patch-embed permutation: %zu differing bits over 20 trials; encoder equivariance max err %.1e <= 1e-10; "
                    "zeroed visible decoder rows: %zu differing loss/gradient values (chamfer and emd)",
                    embed_bad, equivariance, zero_bad)};
}

// ---------------------------------------------------------------- criterion 4

Outcome asymmetry() {
  const ModelConfig c;
  OcclusionAutoEncoder<float> m(c, 1);
  const auto p = m.values();
  const std::size_t visible = c.groups - occluded_count(c.groups, 0.75);
  ops::reset_matmul_macs();
  m.encoder_stack(p, Tensor<float>(Shape{visible, c.encoder_dim}));
  const double enc = static_cast<double>(ops::matmul_macs());
  ops::reset_matmul_macs();
  m.decoder_stack(p, Tensor<float>(Shape{c.groups, c.decoder_dim}));
  const double dec = static_cast<double>(ops::matmul_macs());
  const double ratio = dec / enc;
  return {ratio <= 0.30, fmt("encoder %zu blocks on %zu visible tokens at %zu: %.4g MACs; decoder %zu blocks on %zu tokens at %zu: "
                             "%.4g MACs; ratio %.3f <= 0.30",
                             c.encoder_depth, visible, c.encoder_dim, enc, c.decoder_depth, c.groups, c.decoder_dim, dec, ratio)};
}

// ---------------------------------------------------------------- criteria 5 to 7

struct DeskRun {
  cli::RunConfig config;
  Benchmark bench;
  fs::path dir;
  std::vector<double> final_checkpoint_values;
  bool trained = false;
};

std::map<std::size_t, double> epoch_means(const std::vector<MetricsRecord>& records, const char* split) {
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (const auto& r : records)
    if (r.split == split) {
      acc[r.epoch].first += r.loss;
      acc[r.epoch].second += 1;
    }
  std::map<std::size_t, double> out;
  for (const auto& [e, s] : acc) out[e] = s.first / static_cast<double>(s.second);
  return out;
}

Outcome desk_training(DeskRun& run) {
  const auto& c = run.config;
  std::vector<std::vector<MetricsRecord>> records;
  double first_secs = 0.0;
  for (const char* name : {"run_a", "run_b"}) {
    OcclusionAutoEncoder<float> m(c.model, model_init_seed(c.train.seed));
    PretrainOptions o;
    o.checkpoint_dir = run.dir / name;
    o.validation = run.bench.test.clouds;
    const auto t0 = Clock::now();
    records.push_back(pretrain(m, run.bench.train.clouds, c.train, o));
    if (first_secs == 0.0) first_secs = seconds_since(t0);
  }
  run.trained = true;

  bool identical = records[0].size() == records[1].size() &&
                   slurp(run.dir / "run_a" / "final.oae") == slurp(run.dir / "run_b" / "final.oae");
  for (std::size_t i = 0; identical && i < records[0].size(); ++i) {
    const auto &a = records[0][i], &b = records[1][i];
    identical = a.step == b.step && a.epoch == b.epoch && a.split == b.split && same_bits(a.loss, b.loss) &&
                same_bits(a.lr, b.lr);
  }

  const auto train = epoch_means(records[0], "train");
  const auto val = epoch_means(records[0], "val");
  const double first = train.at(1), last = train.at(c.train.epochs);
  const double ratio = last / first;
  const bool pass = first_secs < 1800.0 && ratio <= 0.5 && identical;
  return {pass, fmt("%zu clouds, %zu epochs in %.0f s < 1800 s; train CD epoch 1 %.4f, epoch %zu %.4f, ratio %.3f <= 0.50; "
                    "val CD %.4f -> %.4f; two runs bitwise identical: %s",
                    run.bench.train.clouds.size(), c.train.epochs, first_secs, first, c.train.epochs, last, ratio,
                    val.at(1), val.at(c.train.epochs), identical ? "yes" : "no")};
}

Outcome representation_gap(const DeskRun& run) {
  if (!run.trained) return {false, "desk training did not run"};
  const auto& c = run.config;
  const auto& b = run.bench;
  OcclusionAutoEncoder<float> random_model(c.model, model_init_seed(c.train.seed));
  OcclusionAutoEncoder<float> trained(c.model, model_init_seed(c.train.seed));
  load_checkpoint(run.dir / "run_a" / "final.oae", trained.parameters());

  const auto rtr = extract_features(random_model, b.train.clouds), rte = extract_features(random_model, b.test.clouds);
  const auto ptr = extract_features(trained, b.train.clouds), pte = extract_features(trained, b.test.clouds);
  const auto random_report = linear_probe(rtr, b.train.labels, rte, b.test.labels, c.probe);
  const auto trained_report = linear_probe(ptr, b.train.labels, pte, b.test.labels, c.probe);

  Rng rng(mix_seed(c.train.seed, 0x6e756c6c));
  double null_lo = 1.0, null_hi = 0.0;
  const int null_runs = 10;
  for (int i = 0; i < null_runs; ++i) {
    std::vector<int> shuffled = b.train.labels;
    for (std::size_t j = shuffled.size(); j > 1; --j) std::swap(shuffled[j - 1], shuffled[rng.below(j)]);
    const auto r = linear_probe(ptr, shuffled, pte, b.test.labels, c.probe);
    null_lo = std::min(null_lo, r.test_accuracy);
    null_hi = std::max(null_hi, r.test_accuracy);
  }
  const double gap = trained_report.test_accuracy - random_report.test_accuracy;
  const bool pass = gap >= 0.10 && trained_report.test_accuracy > null_hi;
  std::ofstream(run.dir / "probe_trained.txt") << format_probe_report(trained_report, b.classes);
  std::ofstream(run.dir / "probe_random.txt") << format_probe_report(random_report, b.classes);
  return {pass, fmt("probe test accuracy pretrained %.4f vs random init %.4f: gap %.1f points (need >= 10); "
                    "shuffled-label null band [%.4f, %.4f] over %d permutations",
                    trained_report.test_accuracy, random_report.test_accuracy, 100.0 * gap, null_lo, null_hi, null_runs)};
}

Outcome ablation_trend(const DeskRun& run) {
  const auto& c = run.config;
  const std::vector<std::string> values{"0", "0.5", "0.75", "0.85"};
  const auto rows = ablate(c.model, c.train, AblationAxis::ratio, values, run.bench, c.probe, run.dir / "ablation");
  const auto csv = run.dir / "ablation" / "ablation.csv";
  write_ablation_csv(csv, rows);
  const auto text = slurp(csv);
  const bool csv_ok = std::count(text.begin(), text.end(), '\n') == static_cast<long>(values.size() + 1);
  double zero_acc = -1.0, worst_trained = 2.0;
  std::string detail;
  for (const auto& r : rows) {
    detail += fmt("%s%s=%.4f", detail.empty() ? "" : ", ", r.value.c_str(), r.test_accuracy);
    if (r.value == "0") zero_acc = r.test_accuracy;
    else if (r.trained) worst_trained = std::min(worst_trained, r.test_accuracy);
  }
  const bool pass = csv_ok && rows.size() == values.size() && zero_acc >= 0.0 && zero_acc < worst_trained;
  return {pass, fmt("probe test accuracy by ratio: %s; ratio 0 strictly below every trained ratio: %s; CSV %s",
                    detail.c_str(), zero_acc < worst_trained ? "yes" : "no", csv.string().c_str())};
}

// ---------------------------------------------------------------- criterion 8

std::size_t count_lines(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

Outcome io_exactness(const fs::path& dir) {
  fs::create_directories(dir);
  std::string problems;
  auto note = [&](const std::string& s) { problems += (problems.empty() ? "" : "; ") + s; };

  auto round_trip = [&](auto& src, auto& dst, const char* name) {
    const auto a = dir / (std::string(name) + ".oae"), b = dir / (std::string(name) + "_again.oae");
    save_checkpoint(a, src.parameters());
    if (!load_checkpoint(a, dst.parameters()).exact()) note(std::string(name) + " report not exact");
    for (std::size_t i = 0; i < src.parameters().size(); ++i) {
      const auto x = src.parameters()[i].value.values(), y = dst.parameters()[i].value.values();
      if (!std::equal(x.begin(), x.end(), y.begin(), y.end(),
                      [](auto u, auto v) { return std::memcmp(&u, &v, sizeof u) == 0; }))
        note(std::string(name) + " value mismatch in " + src.parameters()[i].name);
    }
    save_checkpoint(b, dst.parameters());
    if (slurp(a) != slurp(b)) note(std::string(name) + " re-save differs");
    return a;
  };
  const auto desk = cli::desk_config();
  OcclusionAutoEncoder<float> f1(desk.model, 1), f2(desk.model, 2);
  randomize(f1, 3);
  round_trip(f1, f2, "float");
  OcclusionAutoEncoder<double> d1(toy_config(), 1), d2(toy_config(), 2);
  randomize(d1, 4);
  const auto small = round_trip(d1, d2, "double");

  const PointCloud cloud = random_cloud(1000, 5);
  save_pointcloud(dir / "cloud.bin", cloud);
  const auto back = load_pointcloud(dir / "cloud.bin");
  bool cloud_ok = back.points.size() == cloud.points.size();
  for (std::size_t i = 0; cloud_ok && i < cloud.points.size(); ++i)
    for (int k = 0; k < 3; ++k) cloud_ok = cloud_ok && same_bits(cloud.points[i][k], back.points[i][k]);
  save_pointcloud(dir / "cloud_again.bin", back);
  if (!cloud_ok || slurp(dir / "cloud.bin") != slurp(dir / "cloud_again.bin")) note("point cloud round trip differs");

  const std::string bytes = slurp(small);
  std::size_t undetected = 0;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    std::string bad = bytes;
    bad[i] = static_cast<char>(bad[i] ^ static_cast<char>(1u << (i % 8)));
    std::ofstream(dir / "corrupt.oae", std::ios::binary) << bad;
    try {
      load_checkpoint(dir / "corrupt.oae", d2.parameters());
      ++undetected;
    } catch (const DataError&) {
    }
  }
  std::size_t truncation_undetected = 0;
  for (std::size_t len = 0; len < bytes.size(); len += 7) {
    std::ofstream(dir / "short.oae", std::ios::binary) << bytes.substr(0, len);
    try {
      load_checkpoint(dir / "short.oae", d2.parameters());
      ++truncation_undetected;
    } catch (const DataError&) {
    }
  }
  if (undetected) note(std::to_string(undetected) + " single-byte corruptions loaded");
  if (truncation_undetected) note(std::to_string(truncation_undetected) + " truncations loaded");

  std::size_t configs = 0, rejected = 0, count_bad = 0;
  for (std::size_t g : {4, 8, 16, 64})
    for (std::size_t k : {4, 8, 32})
      for (double ratio : {0.1, 0.25, 0.5, 0.75, 0.9}) {
        const std::size_t r = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(g)));
        const auto out = dir / fmt("rec_%zu_%zu_%g", g, k, ratio);
        std::vector<std::string> args{"reconstruct", "--out", out.string(), "--ratio", fmt("%.17g", ratio),
                                      "--strategy", configs % 2 ? "block" : "random"};
        for (const auto& s : {fmt("model.points=%zu", std::max<std::size_t>(2 * g * k / 3, 64)), fmt("model.groups=%zu", g),
                              fmt("model.patch_size=%zu", k), fmt("model.decoder_dim=%zu", 3 * k),
                              std::string("model.encoder_dim=16"), std::string("model.heads=2"),
                              std::string("model.encoder_depth=1"), std::string("model.decoder_depth=1"),
                              std::string("model.embed_hidden=16")}) {
          args.push_back("--set");
          args.push_back(s);
        }
        std::ostringstream so, se;
        const int code = cli::dispatch(args, so, se);
        ++configs;
        if (r == 0 || r == g) {
          ++rejected;
          if (code != cli::kUsage) ++count_bad;
          continue;
        }
        if (code != cli::kOk || count_lines(out / "predicted.xyz") != r * k ||
            count_lines(out / "visible.xyz") != (g - r) * k || count_lines(out / "target_occluded.xyz") != r * k)
          ++count_bad;
        fs::remove_all(out);
      }
  if (count_bad) note(std::to_string(count_bad) + " reconstruct configs with wrong point counts");

  return {problems.empty(), fmt("float and double checkpoints and OPC1 clouds bitwise round trip; %zu/%zu single-byte corruptions "
                                "and all truncations rejected; reconstruct counts R*K and (G-R)*K checked on %zu configs, "
                                "%zu with R=0 or R=G rejected as usage errors%s%s",
                                bytes.size() - undetected, bytes.size(), configs - rejected, rejected, problems.empty() ? "" : "; problems: ",
                                problems.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "oae_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  DeskRun desk;
  desk.config = cli::desk_config();
  desk.dir = dir;
  BenchmarkConfig bc = desk.config.data;
  bc.n_points = desk.config.model.points;

  int failures = 0;
  failures += !report(1, "autodiff soundness", autodiff_soundness);
  failures += !report(2, "geometry oracles", geometry_oracles);
  failures += !report(3, "architecture invariants", architecture_invariants);
  failures += !report(4, "decoder/encoder multiply-add asymmetry", asymmetry);
  desk.bench = make_benchmark(bc);
  failures += !report(5, "desk-scale training smoke", [&] { return desk_training(desk); });
  failures += !report(6, "representation gap", [&] { return representation_gap(desk); });
  failures += !report(7, "occlusion-ratio ablation", [&] { return ablation_trend(desk); });
  failures += !report(8, "I/O bit-exactness", [&] { return io_exactness(dir / "io"); });
  std::printf("%d of 8 criteria passed; artifacts in %s\n", 8 - failures, dir.string().c_str());
  return failures == 0 ? 0 : 1;
}
