#include "oae/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "oae/errors.hpp"
#include "oae/geometry.hpp"
#include "oae/rng.hpp"

namespace oae::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename U>
U parse_number(const std::string& key, const std::string& text) {
  U v{};
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw UsageError("invalid value '" + text + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw UsageError("invalid value '" + text + "' for " + key + " (expected true or false)");
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename U, typename Access>
Field size_field(const char* section, const char* key, Access access) {
  return {section, key,
          [access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_number<U>(k, v); },
          [access](const RunConfig& c) { return std::to_string(access(c)); }};
}

template <typename Access>
Field real_field(const char* section, const char* key, Access access) {
  return {section, key,
          [access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_number<double>(k, v); },
          [access](const RunConfig& c) { return format_real(access(c)); }};
}

template <typename Access, typename Parse, typename Print>
Field text_field(const char* section, const char* key, Access access, Parse parse, Print print) {
  return {section, key,
          [access, parse](RunConfig& c, const std::string& k, const std::string& v) {
            try {
              access(c) = parse(v);
            } catch (const UsageError& e) {
              throw UsageError("invalid value '" + v + "' for " + k + ": " + e.what());
            }
          },
          [access, print](const RunConfig& c) { return print(access(c)); }};
}

const std::vector<Field>& fields() {
  using Z = std::size_t;
  static const std::vector<Field> table = {
      size_field<Z>("model", "points", [](auto& c) -> auto& { return c.model.points; }),
      size_field<Z>("model", "groups", [](auto& c) -> auto& { return c.model.groups; }),
      size_field<Z>("model", "patch_size", [](auto& c) -> auto& { return c.model.patch_size; }),
      size_field<Z>("model", "encoder_dim", [](auto& c) -> auto& { return c.model.encoder_dim; }),
      size_field<Z>("model", "decoder_dim", [](auto& c) -> auto& { return c.model.decoder_dim; }),
      size_field<Z>("model", "encoder_depth", [](auto& c) -> auto& { return c.model.encoder_depth; }),
      size_field<Z>("model", "decoder_depth", [](auto& c) -> auto& { return c.model.decoder_depth; }),
      size_field<Z>("model", "heads", [](auto& c) -> auto& { return c.model.heads; }),
      size_field<Z>("model", "mlp_ratio", [](auto& c) -> auto& { return c.model.mlp_ratio; }),
      size_field<Z>("model", "embed_hidden", [](auto& c) -> auto& { return c.model.embed_hidden; }),
      real_field("model", "norm_eps", [](auto& c) -> auto& { return c.model.norm_eps; }),
      real_field("model", "init_std", [](auto& c) -> auto& { return c.model.init_std; }),

      real_field("train", "lr", [](auto& c) -> auto& { return c.train.lr; }),
      real_field("train", "weight_decay", [](auto& c) -> auto& { return c.train.weight_decay; }),
      size_field<Z>("train", "batch_size", [](auto& c) -> auto& { return c.train.batch_size; }),
      size_field<Z>("train", "epochs", [](auto& c) -> auto& { return c.train.epochs; }),
      text_field(
          "train", "warmup_epochs", [](auto& c) -> auto& { return c.train.warmup_epochs; },
          [](const std::string& v) -> std::optional<std::size_t> {
            if (v == "auto") return std::nullopt;
            return parse_number<std::size_t>("train.warmup_epochs", v);
          },
          [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string("auto"); }),
      text_field(
          "train", "schedule", [](auto& c) -> auto& { return c.train.schedule; }, parse_schedule,
          [](Schedule s) { return to_string(s); }),
      real_field("train", "ratio", [](auto& c) -> auto& { return c.train.ratio; }),
      text_field(
          "train", "strategy", [](auto& c) -> auto& { return c.train.strategy; }, parse_occlusion_strategy,
          [](OcclusionStrategy s) { return to_string(s); }),
      text_field(
          "train", "loss", [](auto& c) -> auto& { return c.train.loss; }, parse_loss_kind,
          [](LossKind k) { return to_string(k); }),
      size_field<std::uint64_t>("train", "seed", [](auto& c) -> auto& { return c.train.seed; }),
      text_field(
          "train", "augment", [](auto& c) -> auto& { return c.train.augment; }, parse_augment_flags,
          [](const AugmentFlags& f) { return to_string(f); }),
      real_field("train", "beta1", [](auto& c) -> auto& { return c.train.beta1; }),
      real_field("train", "beta2", [](auto& c) -> auto& { return c.train.beta2; }),
      real_field("train", "adam_eps", [](auto& c) -> auto& { return c.train.adam_eps; }),
      size_field<Z>("train", "checkpoint_every", [](auto& c) -> auto& { return c.train.checkpoint_every; }),

      size_field<Z>("data", "train_count", [](auto& c) -> auto& { return c.data.train_count; }),
      size_field<Z>("data", "test_count", [](auto& c) -> auto& { return c.data.test_count; }),
      real_field("data", "jitter", [](auto& c) -> auto& { return c.data.jitter; }),
      size_field<std::uint64_t>("data", "seed", [](auto& c) -> auto& { return c.data.seed; }),

      real_field("probe", "l2", [](auto& c) -> auto& { return c.probe.l2; }),
      size_field<Z>("probe", "max_iterations", [](auto& c) -> auto& { return c.probe.max_iterations; }),
      real_field("probe", "tolerance", [](auto& c) -> auto& { return c.probe.tolerance; }),
      text_field(
          "probe", "standardize", [](auto& c) -> auto& { return c.probe.standardize; },
          [](const std::string& v) { return parse_bool("probe.standardize", v); },
          [](bool b) { return std::string(b ? "true" : "false"); }),
  };
  return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields())
    if (section == f.section && key == f.key) return &f;
  return nullptr;
}

bool known_section(const std::string& s) { return s == "model" || s == "train" || s == "data" || s == "probe"; }

void set_value(RunConfig& c, const std::string& section, const std::string& key, const std::string& value,
               const std::string& where) {
  const Field* f = find_field(section, key);
  const std::string name = section + "." + key;
  if (!f) throw UsageError(where + "unknown key '" + name + "'");
  try {
    f->set(c, name, value);
  } catch (const UsageError& e) {
    throw UsageError(where + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

//----------------------------------------------------------------------------

using Model = OcclusionAutoEncoder<float>;

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

void write_resolved(const fs::path& dir, const RunConfig& c, const std::vector<std::string>& args) {
  std::ofstream f(dir / "resolved.cfg", std::ios::binary);
  if (!f) throw DataError("cannot write " + (dir / "resolved.cfg").string());
  f << "# oae";
  for (const auto& a : args) f << ' ' << a;
  f << "\n" << format_config(c);
  if (!f) throw DataError("cannot write " + (dir / "resolved.cfg").string());
}

BenchmarkConfig benchmark_config(const RunConfig& c) {
  BenchmarkConfig b = c.data;
  b.n_points = c.model.points;
  return b;
}

Benchmark benchmark_for(const RunConfig& c, const std::string& manifest) {
  if (!manifest.empty()) return load_benchmark(manifest);
  return make_benchmark(benchmark_config(c));
}

void load_weights(Model& m, const std::string& checkpoint, std::ostream& out) {
  if (checkpoint.empty()) {
    out << "no checkpoint given: using initial weights from seed\n";
    return;
  }
  load_checkpoint(checkpoint, m.parameters());
}

void write_points(const fs::path& path, std::vector<Point3> pts) { save_pointcloud(path, PointCloud{std::move(pts)}); }

std::vector<Point3> rows_to_points(const Tensor<float>& t) {
  std::vector<Point3> pts(t.shape()[0]);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {t[i * 3], t[i * 3 + 1], t[i * 3 + 2]};
  return pts;
}

struct Inputs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  std::string data;
  std::string checkpoint;
  std::string input;
  std::string shape = "sphere";
  std::string axis;
  std::string values;
  std::optional<std::size_t> points, epochs, batch_size;
  std::optional<double> lr, ratio;
  std::optional<std::string> loss, strategy;
};

RunConfig resolve(const Inputs& in) {
  RunConfig c = desk_config();
  if (!in.config.empty()) apply_config_file(c, in.config);
  for (const auto& s : in.sets) apply_override(c, s);
  auto set = [&](const char* key, const std::string& v) {
    const std::string k(key);
    const auto dot = k.find('.');
    set_value(c, k.substr(0, dot), k.substr(dot + 1), v, "--" + k.substr(dot + 1) + ": ");
  };
  if (in.seed) {
    c.train.seed = *in.seed;
    c.data.seed = *in.seed;
  }
  if (in.points) c.model.points = *in.points;
  if (in.epochs) c.train.epochs = *in.epochs;
  if (in.batch_size) c.train.batch_size = *in.batch_size;
  if (in.lr) c.train.lr = *in.lr;
  if (in.ratio) c.train.ratio = *in.ratio;
  if (in.loss) set("train.loss", *in.loss);
  if (in.strategy) set("train.strategy", *in.strategy);
  c.validate();
  return c;
}

int run_gen_data(const RunConfig& c, const fs::path& out_dir, std::ostream& out) {
  DatasetManifest manifest;
  const Benchmark b = make_benchmark(benchmark_config(c), &manifest);
  std::size_t train_i = 0, test_i = 0;
  for (const auto& e : manifest.entries) {
    const auto path = out_dir / e.path;
    prepare_out_dir(path.parent_path());
    save_pointcloud(path, e.split == "train" ? b.train.clouds[train_i++] : b.test.clouds[test_i++]);
  }
  save_manifest(out_dir / "manifest.txt", manifest);
  out << "wrote " << manifest.entries.size() << " clouds and " << (out_dir / "manifest.txt").string() << "\n";
  return kOk;
}

int run_pretrain(const RunConfig& c, const Inputs& in, const fs::path& out_dir, std::ostream& out) {
  const Benchmark b = benchmark_for(c, in.data);
  Model m(c.model, model_init_seed(c.train.seed));
  load_weights(m, in.checkpoint, out);
  PretrainOptions o;
  o.checkpoint_dir = out_dir;
  o.validation = b.test.clouds;
  o.on_epoch = [&](const MetricsRecord& r) {
    char line[96];
    std::snprintf(line, sizeof line, "epoch %zu loss %.6f lr %.3g\n", r.epoch, r.loss, r.lr);
    out << line << std::flush;
  };
  const auto records = pretrain(m, b.train.clouds, c.train, o);
  out << "wrote " << records.size() << " metrics rows and " << (out_dir / "final.oae").string() << "\n";
  return kOk;
}

int run_reconstruct(const RunConfig& c, const Inputs& in, const fs::path& out_dir, std::ostream& out) {
  PointCloud cloud;
  if (!in.input.empty()) {
    cloud = load_pointcloud(in.input);
  } else {
    const auto cat = parse_shape_category(in.shape);
    const auto seed = mix_seed(c.data.seed, 3);
    cloud = generate_synthetic(random_shape_spec(cat, c.model.points, c.data.jitter, mix_seed(seed, 1)),
                               mix_seed(seed, 2));
  }
  validate(cloud);
  Model m(c.model, model_init_seed(c.train.seed));
  load_weights(m, in.checkpoint, out);
  const auto s = prepare_sample(cloud, c.model, c.train.ratio, c.train.strategy, c.train.seed);
  if (s.mask.occluded.empty()) throw UsageError("ratio " + format_real(c.train.ratio) + " occludes no patches");
  if (s.mask.visible.empty()) throw UsageError("ratio " + format_real(c.train.ratio) + " occludes every patch");
  const auto p = m.values();
  const auto all_seeds = seeds_tensor<float>(s.patches);
  const auto enc = m.encode(p, patches_tensor<float>(s.patches, s.mask.visible),
                            seeds_tensor<float>(s.patches, s.mask.visible));
  const auto predicted = rows_to_points(m.reconstruct(m.decode(p, enc, s.mask, all_seeds), s.mask, all_seeds));
  std::vector<Point3> visible;
  const std::size_t k = c.model.patch_size;
  for (std::size_t g : s.mask.visible)
    for (std::size_t j = 0; j < k; ++j) visible.push_back(s.cloud.points[s.patches.source_indices[g * k + j]]);

  write_points(out_dir / "input.xyz", s.cloud.points);
  write_points(out_dir / "visible.xyz", visible);
  write_points(out_dir / "predicted.xyz", predicted);
  write_points(out_dir / "target_occluded.xyz", s.target);
  const auto chamfer = chamfer_distance(predicted, s.target);
  char line[160];
  std::snprintf(line, sizeof line, "occluded %zu of %zu patches: predicted %zu points, visible %zu points, chamfer %.6f\n",
                s.mask.occluded.size(), c.model.groups, predicted.size(), visible.size(), chamfer);
  out << line;
  return kOk;
}

int run_probe(const RunConfig& c, const Inputs& in, const fs::path& out_dir, std::ostream& out) {
  const Benchmark b = benchmark_for(c, in.data);
  Model m(c.model, model_init_seed(c.train.seed));
  load_weights(m, in.checkpoint, out);
  const auto train_x = extract_features(m, b.train.clouds);
  const auto test_x = extract_features(m, b.test.clouds);
  const auto report = linear_probe(train_x, b.train.labels, test_x, b.test.labels, c.probe);
  write_probe_report(out_dir, report, b.classes);
  out << format_probe_report(report, b.classes);
  return kOk;
}

int run_ablate(const RunConfig& c, const Inputs& in, const fs::path& out_dir, std::ostream& out) {
  const auto axis = parse_ablation_axis(in.axis);
  const auto values = split_list(in.values);
  if (values.empty()) throw UsageError("--values names no values");
  const Benchmark b = benchmark_for(c, in.data);
  const auto rows = ablate(c.model, c.train, axis, values, b, c.probe, out_dir);
  write_ablation_csv(out_dir / "ablation.csv", rows);
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%s=%s%s train loss %.6f probe test %.4f\n", r.axis.c_str(), r.value.c_str(),
                  r.trained ? "" : " (probe-only)", r.final_train_loss, r.test_accuracy);
    out << line;
  }
  out << "wrote " << (out_dir / "ablation.csv").string() << "\n";
  return kOk;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (data.train_count == 0 || data.test_count == 0) throw UsageError("data.train_count and data.test_count must be positive");
  if (!(data.jitter >= 0.0)) throw UsageError("data.jitter must be nonnegative");
  if (!(probe.l2 >= 0.0)) throw UsageError("probe.l2 must be nonnegative");
  if (!(probe.tolerance > 0.0)) throw UsageError("probe.tolerance must be positive");
}

RunConfig desk_config() {
  RunConfig c;
  c.model.points = 256;
  c.model.groups = 16;
  c.model.patch_size = 16;
  c.model.encoder_dim = 64;
  c.model.decoder_dim = 48;
  c.model.encoder_depth = 4;
  c.model.decoder_depth = 2;
  c.model.heads = 4;
  c.train.lr = 8e-3;
  c.train.batch_size = 32;
  c.train.epochs = 30;
  c.train.ratio = 0.75;
  c.train.augment = AugmentFlags{false, false, false, false};
  return c;
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + " line " + std::to_string(line_no) + ": ";
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError(where + "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section)) throw UsageError(where + "unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(where + "expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw UsageError(where + "key '" + key + "' outside any section");
    set_value(config, section, key, value, where);
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(config, ss.str(), path);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw UsageError("--set expects section.key=value, got '" + assignment + "'");
  const std::string section = trim(assignment.substr(0, dot));
  if (!known_section(section)) throw UsageError("--set: unknown section '" + section + "'");
  set_value(config, section, trim(assignment.substr(dot + 1, eq - dot - 1)), trim(assignment.substr(eq + 1)), "--set: ");
}

std::string format_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Occlusion autoencoder for point clouds", "oae"};
  app.require_subcommand(1);
  Inputs in;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", in.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", in.seed, "seed for training, masks and data generation");
    sub->add_option("--out", in.out, "output directory")->required();
    sub->add_option("--set", in.sets, "override one key, as section.key=value");
    sub->add_option("--points", in.points, "points per generated cloud (model.points)");
  };
  auto training = [&](CLI::App* sub) {
    sub->add_option("--epochs", in.epochs);
    sub->add_option("--batch-size", in.batch_size);
    sub->add_option("--lr", in.lr);
    sub->add_option("--ratio", in.ratio, "occlusion ratio");
    sub->add_option("--loss", in.loss, "chamfer or emd");
    sub->add_option("--strategy", in.strategy, "random or block");
  };

  auto* gen = app.add_subcommand("gen-data", "write the synthetic benchmark as cloud files and a manifest");
  common(gen);
  auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining with checkpoints and metrics");
  common(pre);
  training(pre);
  pre->add_option("--data", in.data, "manifest from gen-data; default generates the benchmark in memory");
  pre->add_option("--checkpoint", in.checkpoint, "start from these weights");
  auto* rec = app.add_subcommand("reconstruct", "occlude one cloud and write the reconstruction");
  common(rec);
  rec->add_option("--checkpoint", in.checkpoint);
  rec->add_option("--input", in.input, "cloud file (.xyz or .bin); default generates one");
  rec->add_option("--shape", in.shape, "category of the generated cloud");
  rec->add_option("--ratio", in.ratio, "occlusion ratio");
  rec->add_option("--strategy", in.strategy, "random or block");
  auto* probe = app.add_subcommand("probe", "linear probe on frozen encoder features");
  common(probe);
  probe->add_option("--checkpoint", in.checkpoint, "default probes the initial weights");
  probe->add_option("--data", in.data);
  auto* abl = app.add_subcommand("ablate", "pretrain and probe once per value of one axis");
  common(abl);
  training(abl);
  abl->add_option("--axis", in.axis, "ratio, strategy, loss, groups or patch_size")->required();
  abl->add_option("--values", in.values, "comma-separated values")->required();
  abl->add_option("--data", in.data);

  if (!args.empty() && !args[0].starts_with("-") && !app.get_subcommand_no_throw(args[0])) {
    err << "error: unknown subcommand '" << args[0] << "'\n" << app.help();
    return kUsage;
  }
  std::vector<std::string> argv_storage{"oae"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    const RunConfig c = resolve(in);
    const fs::path out_dir(in.out);
    prepare_out_dir(out_dir);
    write_resolved(out_dir, c, args);
    if (*gen) return run_gen_data(c, out_dir, out);
    if (*pre) return run_pretrain(c, in, out_dir, out);
    if (*rec) return run_reconstruct(c, in, out_dir, out);
    if (*probe) return run_probe(c, in, out_dir, out);
    return run_ablate(c, in, out_dir, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  }
}

}  // namespace oae::cli
