#include "oae/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "oae/errors.hpp"
#include "oae/rng.hpp"

namespace oae {

namespace {

constexpr double kPi = std::numbers::pi;

double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

template <typename T>
void check_range(const char* what, T v, T lo, T hi) {
  if (!(v >= lo && v <= hi)) {
    throw UsageError(std::string("shape spec: ") + what + " = " + std::to_string(v) + " outside [" +
                     std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

Point3 sample_sphere(Rng& rng, double r) {
  Point3 p{rng.normal(), rng.normal(), rng.normal()};
  double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  while (n == 0.0) {
    p = {rng.normal(), rng.normal(), rng.normal()};
    n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  }
  return {r * p[0] / n, r * p[1] / n, r * p[2] / n};
}

Point3 sample_box(Rng& rng, const std::array<double, 3>& e) {
  const double areas[3] = {e[1] * e[2], e[0] * e[2], e[0] * e[1]};  // faces normal to x, y, z
  const double total = areas[0] + areas[1] + areas[2];
  double u = rng.uniform() * total;
  std::size_t axis = 0;
  while (axis < 2 && u >= areas[axis]) u -= areas[axis++];
  Point3 p;
  for (std::size_t a = 0; a < 3; ++a) p[a] = rng.uniform(-0.5, 0.5) * e[a];
  p[axis] = (rng.uniform() < 0.5 ? -0.5 : 0.5) * e[axis];
  return p;
}

Point3 sample_torus(Rng& rng, double big, double small) {
  // Surface density is proportional to (R + r cos u).
  double u, w;
  do {
    u = rng.uniform(0.0, 2.0 * kPi);
    w = rng.uniform();
  } while (w * (big + small) > big + small * std::cos(u));
  const double v = rng.uniform(0.0, 2.0 * kPi);
  const double ring = big + small * std::cos(u);
  return {ring * std::cos(v), ring * std::sin(v), small * std::sin(u)};
}

Point3 sample_cylinder(Rng& rng, double r, double h) {
  const double lateral = 2.0 * kPi * r * h;
  const double caps = 2.0 * kPi * r * r;
  const double theta = rng.uniform(0.0, 2.0 * kPi);
  if (rng.uniform() * (lateral + caps) < lateral) {
    return {r * std::cos(theta), r * std::sin(theta), rng.uniform(-0.5, 0.5) * h};
  }
  const double rho = r * std::sqrt(rng.uniform());
  return {rho * std::cos(theta), rho * std::sin(theta), (rng.uniform() < 0.5 ? -0.5 : 0.5) * h};
}

Point3 sample_cone(Rng& rng, double r, double h) {
  const double slant = std::sqrt(r * r + h * h);
  const double lateral = kPi * r * slant;
  const double base = kPi * r * r;
  // Apex at z = h, base at z = 0, shifted so the surface centroid is the origin.
  const double centroid = lateral * (h / 3.0) / (lateral + base);
  const double theta = rng.uniform(0.0, 2.0 * kPi);
  if (rng.uniform() * (lateral + base) < lateral) {
    const double t = std::sqrt(rng.uniform());
    return {t * r * std::cos(theta), t * r * std::sin(theta), h * (1.0 - t) - centroid};
  }
  const double rho = r * std::sqrt(rng.uniform());
  return {rho * std::cos(theta), rho * std::sin(theta), -centroid};
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end, std::string path)
      : bytes_(bytes), end_(end), path_(std::move(path)) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == end_; }

  void need(std::size_t n, const char* what) const {
    if (end_ - pos_ < n) {
      throw DataError(path_ + ": truncated at byte " + std::to_string(pos_) + " while reading " + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string path_;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(path.string() + ": write failed");
}

PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  PointCloud cloud;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::vector<double> fields;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
      while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && !std::isspace(static_cast<unsigned char>(*next)))) {
        throw DataError(path.string() + ": line " + std::to_string(number) + ": malformed number");
      }
      fields.push_back(v);
      p = next;
    }
    if (fields.empty()) continue;
    if (fields.size() != 3) {
      throw DataError(path.string() + ": line " + std::to_string(number) + ": expected 3 fields, got " +
                      std::to_string(fields.size()));
    }
    cloud.points.push_back({fields[0], fields[1], fields[2]});
  }
  return cloud;
}

void save_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  std::string out;
  char buf[96];
  for (const auto& p : cloud.points) {
    const int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
    out.append(buf, static_cast<std::size_t>(n));
  }
  write_file(path, out);
}

PointCloud load_bin(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, bytes.size(), path.string());
  if (r.str(4, "magic") != "OPC1") throw DataError(path.string() + ": bad magic, expected OPC1");
  const std::uint32_t count = r.u32("point count");
  r.need(static_cast<std::size_t>(count) * 12, "point data");
  PointCloud cloud;
  cloud.points.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Point3 p;
    for (int a = 0; a < 3; ++a) p[a] = std::bit_cast<float>(r.u32("point data"));
    cloud.points.push_back(p);
  }
  if (!r.done()) throw DataError(path.string() + ": trailing bytes after offset " + std::to_string(r.offset()));
  return cloud;
}

void save_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  std::string out = "OPC1";
  put_u32(out, static_cast<std::uint32_t>(cloud.points.size()));
  for (const auto& p : cloud.points)
    for (int a = 0; a < 3; ++a) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p[a])));
  write_file(path, out);
}

template <typename T>
constexpr std::uint32_t dtype_code() {
  return std::is_same_v<T, float> ? 0u : 1u;
}

}  // namespace

std::string to_string(ShapeCategory c) {
  switch (c) {
    case ShapeCategory::sphere: return "sphere";
    case ShapeCategory::box: return "box";
    case ShapeCategory::torus: return "torus";
    case ShapeCategory::cylinder: return "cylinder";
    case ShapeCategory::cone: return "cone";
  }
  return "?";
}

ShapeCategory parse_shape_category(const std::string& s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  throw UsageError("unknown shape category '" + s + "'");
}

void ShapeSpec::validate() const {
  if (n_points == 0) throw UsageError("shape spec: n_points must be positive");
  check_range("jitter", jitter, 0.0, 1.0);
  switch (category) {
    case ShapeCategory::sphere:
      check_range("radius", params[0], 0.1, 10.0);
      break;
    case ShapeCategory::box:
      for (double e : params) check_range("edge", e, 0.1, 10.0);
      break;
    case ShapeCategory::torus:
      check_range("major radius", params[0], 0.1, 10.0);
      check_range("minor radius", params[1], 0.01, params[0]);
      break;
    case ShapeCategory::cylinder:
    case ShapeCategory::cone:
      check_range("radius", params[0], 0.1, 10.0);
      check_range("height", params[1], 0.1, 10.0);
      break;
  }
}

ShapeSpec random_shape_spec(ShapeCategory category, std::size_t n_points, double jitter, std::uint64_t seed) {
  Rng rng(seed);
  ShapeSpec s;
  s.category = category;
  s.n_points = n_points;
  s.jitter = jitter;
  switch (category) {
    case ShapeCategory::sphere:
      s.params = {rng.uniform(0.5, 1.5), 0.0, 0.0};
      break;
    case ShapeCategory::box:
      s.params = {rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
      break;
    case ShapeCategory::torus:
      s.params = {rng.uniform(1.0, 2.0), rng.uniform(0.2, 0.6), 0.0};
      break;
    case ShapeCategory::cylinder:
    case ShapeCategory::cone:
      s.params = {rng.uniform(0.3, 1.0), rng.uniform(0.5, 2.0), 0.0};
      break;
  }
  return s;
}

PointCloud generate_synthetic(const ShapeSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Point3> pts;
  pts.reserve(spec.n_points);
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    switch (spec.category) {
      case ShapeCategory::sphere: pts.push_back(sample_sphere(rng, spec.params[0])); break;
      case ShapeCategory::box: pts.push_back(sample_box(rng, spec.params)); break;
      case ShapeCategory::torus: pts.push_back(sample_torus(rng, spec.params[0], spec.params[1])); break;
      case ShapeCategory::cylinder: pts.push_back(sample_cylinder(rng, spec.params[0], spec.params[1])); break;
      case ShapeCategory::cone: pts.push_back(sample_cone(rng, spec.params[0], spec.params[1])); break;
    }
  }
  if (spec.jitter > 0.0)
    for (auto& p : pts)
      for (double& v : p) v += rng.normal(0.0, spec.jitter);
  double radius = 0.0;
  for (const auto& p : pts) radius = std::max(radius, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  const double inv = (1.0 / radius) * (1.0 - 0x1.0p-22);
  PointCloud cloud;
  cloud.points.reserve(pts.size());
  for (const auto& p : pts) cloud.points.push_back({quantize(p[0] * inv), quantize(p[1] * inv), quantize(p[2] * inv)});
  return cloud;
}

std::string to_string(const AugmentFlags& f) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(f.rotate, "rotate");
  add(f.scale, "scale");
  add(f.translate, "translate");
  add(f.jitter, "jitter");
  return out.empty() ? "none" : out;
}

AugmentFlags parse_augment_flags(const std::string& s) {
  AugmentFlags f;
  if (s.empty() || s == "none") return f;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "rotate") f.rotate = true;
    else if (item == "scale") f.scale = true;
    else if (item == "translate") f.translate = true;
    else if (item == "jitter") f.jitter = true;
    else if (item == "all") f = {true, true, true, true};
    else throw UsageError("unknown augmentation '" + item + "'");
  }
  return f;
}

PointCloud augment(const PointCloud& cloud, std::uint64_t seed, const AugmentFlags& flags, AugmentRecord* record) {
  Rng rng(seed);
  AugmentRecord rec;
  PointCloud out = cloud;
  if (flags.rotate) {
    rec.angle = rng.uniform(0.0, 2.0 * kPi);
    const double c = std::cos(rec.angle), s = std::sin(rec.angle);
    for (auto& p : out.points) {
      const double x = p[0], y = p[1];
      p[0] = c * x - s * y;
      p[1] = s * x + c * y;
    }
  }
  if (flags.scale) {
    for (double& f : rec.scale) f = rng.uniform(0.8, 1.25);
    for (auto& p : out.points)
      for (int a = 0; a < 3; ++a) p[a] *= rec.scale[a];
  }
  if (flags.translate) {
    for (double& t : rec.shift) t = rng.uniform(-0.1, 0.1);
    for (auto& p : out.points)
      for (int a = 0; a < 3; ++a) p[a] += rec.shift[a];
  }
  if (flags.jitter) {
    for (auto& p : out.points)
      for (double& v : p) v += std::clamp(rng.normal(0.0, 0.01), -0.05, 0.05);
  }
  if (record) *record = rec;
  return out;
}

CloudFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".xyz" || ext == ".txt") return CloudFormat::xyz;
  if (ext == ".bin" || ext == ".opc") return CloudFormat::bin;
  throw UsageError(path.string() + ": cannot infer point-cloud format from extension '" + ext + "'");
}

PointCloud load_pointcloud(const std::filesystem::path& path, CloudFormat format) {
  return format == CloudFormat::xyz ? load_xyz(path) : load_bin(path);
}

void save_pointcloud(const std::filesystem::path& path, const PointCloud& cloud, CloudFormat format) {
  if (format == CloudFormat::xyz) save_xyz(path, cloud);
  else save_bin(path, cloud);
}

PointCloud load_pointcloud(const std::filesystem::path& path) { return load_pointcloud(path, format_from_path(path)); }

void save_pointcloud(const std::filesystem::path& path, const PointCloud& cloud) {
  save_pointcloud(path, cloud, format_from_path(path));
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params) {
  std::string out = "OAE1";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) put_u64(out, d);
    put_u32(out, dtype_code<T>());
    for (T v : e.value.values()) {
      if constexpr (std::is_same_v<T, float>) put_u32(out, std::bit_cast<std::uint32_t>(v));
      else put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  put_u64(out, fnv1a(out.data(), out.size()));
  write_file(path, out);
}

namespace {

struct RawTensor {
  std::string name;
  Shape shape;
  std::uint32_t dtype;
  std::size_t offset;  // first value byte
};

std::vector<RawTensor> parse_checkpoint(const std::string& bytes, const std::string& path) {
  if (bytes.size() < 8) throw DataError(path + ": truncated checkpoint (" + std::to_string(bytes.size()) + " bytes)");
  const std::size_t body = bytes.size() - 8;
  Reader r(bytes, body, path);
  if (r.str(4, "magic") != "OAE1") throw DataError(path + ": bad magic, expected OAE1");
  Reader tail(bytes, bytes.size(), path);
  tail.str(body, "body");
  if (tail.u64("checksum") != fnv1a(bytes.data(), body)) throw DataError(path + ": checksum mismatch");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) throw DataError(path + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32("tensor count");
  std::vector<RawTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    RawTensor t;
    t.name = r.str(r.u32("name length"), "name");
    const std::uint32_t rank = r.u32("rank");
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.u64("dims"));
    t.dtype = r.u32("dtype");
    if (t.dtype > 1) throw DataError(path + ": unknown dtype " + std::to_string(t.dtype) + " for tensor '" + t.name + "'");
    t.offset = r.offset();
    const std::size_t width = t.dtype == 0 ? 4 : 8;
    const std::size_t n = numel(t.shape);
    r.need(n * width, "tensor values");
    r.str(n * width, "tensor values");
    out.push_back(std::move(t));
  }
  if (!r.done()) throw DataError(path + ": trailing bytes after offset " + std::to_string(r.offset()));
  return out;
}

double raw_value(const std::string& bytes, const RawTensor& t, std::size_t i) {
  if (t.dtype == 0) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[t.offset + 4 * i + b])) << (8 * b);
    return std::bit_cast<float>(v);
  }
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[t.offset + 8 * i + b])) << (8 * b);
  return std::bit_cast<double>(v);
}

}  // namespace

std::vector<CheckpointTensor> read_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::vector<CheckpointTensor> out;
  for (const auto& raw : parse_checkpoint(bytes, path.string())) {
    CheckpointTensor t{raw.name, raw.shape, raw.dtype, {}};
    const std::size_t n = numel(raw.shape);
    t.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.values.push_back(raw_value(bytes, raw, i));
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
CheckpointLoadReport load_checkpoint(const std::filesystem::path& path, ParameterSet<T>& params, bool strict) {
  const std::string bytes = read_file(path);
  const auto raws = parse_checkpoint(bytes, path.string());
  CheckpointLoadReport report;
  std::set<std::string> in_file;
  for (const auto& t : raws) {
    in_file.insert(t.name);
    if (!params.find(t.name)) report.extra.push_back(t.name);
  }
  for (const auto& e : params)
    if (!in_file.count(e.name)) report.missing.push_back(e.name);
  if (strict && !report.exact()) {
    std::string msg = path.string() + ": parameter names differ from the model";
    if (!report.missing.empty()) msg += "; missing '" + report.missing.front() + "'";
    if (!report.extra.empty()) msg += "; unexpected '" + report.extra.front() + "'";
    msg += " (" + std::to_string(report.missing.size()) + " missing, " + std::to_string(report.extra.size()) + " extra)";
    throw DataError(msg);
  }
  // Validate every shape before touching any parameter.
  for (const auto& t : raws) {
    if (auto id = params.find(t.name); id && params[*id].value.shape() != t.shape) {
      throw DataError(path.string() + ": tensor '" + t.name + "' has shape " + shape_str(t.shape) +
                      " but the model expects " + shape_str(params[*id].value.shape()));
    }
  }
  for (const auto& t : raws) {
    auto id = params.find(t.name);
    if (!id) continue;
    auto& v = params[*id].value.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(raw_value(bytes, t, i));
  }
  return report;
}

template void save_checkpoint(const std::filesystem::path&, const ParameterSet<float>&);
template void save_checkpoint(const std::filesystem::path&, const ParameterSet<double>&);
template CheckpointLoadReport load_checkpoint(const std::filesystem::path&, ParameterSet<float>&, bool);
template CheckpointLoadReport load_checkpoint(const std::filesystem::path&, ParameterSet<double>&, bool);

void DatasetManifest::validate() const {
  if (classes.empty()) throw DataError("manifest: no classes");
  for (const auto& e : entries) {
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= classes.size()) {
      throw DataError("manifest: label " + std::to_string(e.label) + " out of range for '" + e.path + "'");
    }
    if (e.split != "train" && e.split != "test") {
      throw DataError("manifest: split '" + e.split + "' for '" + e.path + "' is not train or test");
    }
  }
  std::set<std::string> seen;
  for (const auto& e : entries)
    if (!seen.insert(e.path).second) throw DataError("manifest: '" + e.path + "' listed twice");
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  manifest.validate();
  std::string out = "classes";
  for (const auto& c : manifest.classes) out += " " + c;
  out += "\n";
  for (const auto& e : manifest.entries)
    out += e.path + " " + std::to_string(e.seed) + " " + std::to_string(e.label) + " " + e.split + "\n";
  write_file(path, out);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  DatasetManifest m;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first)) continue;
    if (first == "classes") {
      std::string c;
      while (ss >> c) m.classes.push_back(c);
      continue;
    }
    DatasetEntry e;
    e.path = first;
    std::string extra;
    if (!(ss >> e.seed >> e.label >> e.split) || (ss >> extra)) {
      throw DataError(path.string() + ": line " + std::to_string(number) + ": expected 'path seed label split'");
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

Benchmark make_benchmark(const BenchmarkConfig& config, DatasetManifest* manifest) {
  Benchmark b;
  for (auto c : kAllCategories) b.classes.push_back(to_string(c));
  if (manifest) *manifest = DatasetManifest{b.classes, {}};
  auto fill = [&](LabeledClouds& out, std::size_t count, std::uint64_t split_id, const char* split) {
    for (std::size_t i = 0; i < count; ++i) {
      const int label = static_cast<int>(i % kAllCategories.size());
      const std::uint64_t seed = mix_seed(config.seed, split_id, i);
      const auto spec = random_shape_spec(kAllCategories[static_cast<std::size_t>(label)], config.n_points,
                                          config.jitter, mix_seed(seed, 1));
      out.clouds.push_back(generate_synthetic(spec, mix_seed(seed, 2)));
      out.labels.push_back(label);
      if (manifest) {
        char name[32];
        std::snprintf(name, sizeof name, "%s/%05zu.bin", split, i);
        manifest->entries.push_back({name, seed, label, split});
      }
    }
  };
  fill(b.train, config.train_count, 0, "train");
  fill(b.test, config.test_count, 1, "test");
  return b;
}

Benchmark load_benchmark(const std::filesystem::path& manifest_path) {
  const auto m = load_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  Benchmark b;
  b.classes = m.classes;
  for (const auto& e : m.entries) {
    auto& dst = e.split == "train" ? b.train : b.test;
    dst.clouds.push_back(load_pointcloud(dir / e.path));
    dst.labels.push_back(e.label);
  }
  return b;
}

}  // namespace oae
