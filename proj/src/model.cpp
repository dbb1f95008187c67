#include "oae/model.hpp"

#include <cmath>

#include "oae/errors.hpp"
#include "oae/ops.hpp"
#include "oae/rng.hpp"

namespace oae {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("model config: " + what); };
  if (groups == 0 || patch_size == 0) fail("groups and patch_size must be >= 1");
  if (points < groups) fail("points (" + std::to_string(points) + ") must be >= groups (" + std::to_string(groups) + ")");
  if (points < patch_size) fail("points must be >= patch_size");
  if (decoder_dim != 3 * patch_size) {
    fail("decoder_dim (" + std::to_string(decoder_dim) + ") must equal 3 * patch_size (" +
         std::to_string(3 * patch_size) + ")");
  }
  if (heads == 0) fail("heads must be >= 1");
  if (encoder_dim == 0 || encoder_dim % heads != 0) fail("encoder_dim must be a positive multiple of heads");
  if (decoder_dim % heads != 0) fail("decoder_dim must be a multiple of heads");
  if (mlp_ratio == 0 || embed_hidden == 0) fail("mlp_ratio and embed_hidden must be >= 1");
  if (!(norm_eps > 0.0) || !(init_std >= 0.0)) fail("norm_eps must be > 0 and init_std >= 0");
}

template <typename T>
std::size_t ParameterSet<T>::add(std::string name, Tensor<T> value, bool decay) {
  if (by_name_.count(name)) throw UsageError("parameter '" + name + "' registered twice");
  const std::size_t id = entries_.size();
  by_name_.emplace(name, id);
  entries_.push_back(Entry{std::move(name), std::move(value), decay});
  return id;
}

template <typename T>
std::optional<std::size_t> ParameterSet<T>::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::index(const std::string& name) const {
  auto id = find(name);
  if (!id) throw UsageError("no parameter named '" + name + "'");
  return *id;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

namespace {

template <typename T>
class Initializer {
 public:
  Initializer(ParameterSet<T>& params, std::uint64_t seed, double stddev)
      : params_(params), rng_(seed), stddev_(stddev) {}

  // Truncated at two standard deviations.
  Tensor<T> trunc_normal(Shape shape) {
    std::vector<T> v(numel(shape));
    for (T& x : v) {
      double z;
      do {
        z = rng_.normal();
      } while (std::abs(z) > 2.0);
      x = static_cast<T>(z * stddev_);
    }
    return Tensor<T>(std::move(shape), std::move(v));
  }

  LinearSlots linear(const std::string& name, std::size_t in, std::size_t out, bool bias, bool zero = false) {
    LinearSlots l;
    l.weight = params_.add(name + ".weight", zero ? Tensor<T>(Shape{in, out}) : trunc_normal({in, out}), true);
    if (bias) l.bias = params_.add(name + ".bias", Tensor<T>(Shape{out}), false);
    return l;
  }

  NormSlots norm(const std::string& name, std::size_t dim) {
    NormSlots n;
    n.gamma = params_.add(name + ".weight", Tensor<T>::full({dim}, T(1)), false);
    n.beta = params_.add(name + ".bias", Tensor<T>(Shape{dim}), false);
    return n;
  }

  BlockSlots block(const std::string& name, std::size_t dim, std::size_t heads, std::size_t mlp_ratio) {
    BlockSlots b;
    const std::size_t d = dim / heads;
    b.norm1 = norm(name + ".norm1", dim);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::string head = name + ".attn.head" + std::to_string(h);
      b.query.push_back(params_.add(head + ".query", trunc_normal({dim, d}), true));
      b.key.push_back(params_.add(head + ".key", trunc_normal({dim, d}), true));
      b.value.push_back(params_.add(head + ".value", trunc_normal({dim, d}), true));
    }
    b.out = linear(name + ".attn.proj", dim, dim, true);
    b.norm2 = norm(name + ".norm2", dim);
    b.fc1 = linear(name + ".mlp.fc1", dim, dim * mlp_ratio, true);
    b.fc2 = linear(name + ".mlp.fc2", dim * mlp_ratio, dim, true, /*zero=*/true);
    return b;
  }

  std::size_t vector(const std::string& name, std::size_t dim) {
    return params_.add(name, trunc_normal({dim}), false);
  }

 private:
  ParameterSet<T>& params_;
  Rng rng_;
  double stddev_;
};

}  // namespace

template <typename T>
OcclusionAutoEncoder<T>::OcclusionAutoEncoder(ModelConfig config, std::uint64_t init_seed)
    : config_(std::move(config)) {
  config_.validate();
  Initializer<T> init(params_, init_seed, config_.init_std);
  const auto& c = config_;
  slots_.embed1 = init.linear("embed.fc1", 3, c.embed_hidden, true);
  slots_.embed2 = init.linear("embed.fc2", c.embed_hidden, c.encoder_dim, true);
  slots_.enc_pos1 = init.linear("encoder_pos.fc1", 3, c.embed_hidden, true);
  slots_.enc_pos2 = init.linear("encoder_pos.fc2", c.embed_hidden, c.encoder_dim, false);
  for (std::size_t i = 0; i < c.encoder_depth; ++i)
    slots_.encoder.push_back(init.block("encoder.blocks." + std::to_string(i), c.encoder_dim, c.heads, c.mlp_ratio));
  slots_.encoder_norm = init.norm("encoder.norm", c.encoder_dim);
  slots_.proj = init.linear("proj", c.encoder_dim, c.decoder_dim, true);
  slots_.occlusion_token = init.vector("occlusion_token", c.decoder_dim);
  slots_.dec_pos1 = init.linear("decoder_pos.fc1", 3, c.embed_hidden, true);
  slots_.dec_pos2 = init.linear("decoder_pos.fc2", c.embed_hidden, c.decoder_dim, false);
  for (std::size_t i = 0; i < c.decoder_depth; ++i)
    slots_.decoder.push_back(init.block("decoder.blocks." + std::to_string(i), c.decoder_dim, c.heads, c.mlp_ratio));
}

template <typename T>
std::vector<Tensor<T>> OcclusionAutoEncoder<T>::bind(Tape<T>& tape) const {
  std::vector<Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& e : params_) out.push_back(tape.watch(e.value));
  return out;
}

template <typename T>
std::vector<Tensor<T>> OcclusionAutoEncoder<T>::values() const {
  std::vector<Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& e : params_) out.push_back(e.value);
  return out;
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::linear(Params p, const LinearSlots& l, const Tensor<T>& x) const {
  Tensor<T> y = ops::matmul(x, p[l.weight]);
  if (l.bias) y = ops::add_row(y, p[*l.bias]);
  return y;
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::norm(Params p, const NormSlots& n, const Tensor<T>& x) const {
  return ops::layer_norm(x, p[n.gamma], p[n.beta], static_cast<T>(config_.norm_eps));
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::mlp2(Params p, const LinearSlots& a, const LinearSlots& b,
                                        const Tensor<T>& x) const {
  return linear(p, b, ops::gelu(linear(p, a, x)));
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::patch_embed(Params p, const Tensor<T>& patches) const {
  if (patches.rank() != 3 || patches.dim(2) != 3) {
    throw ShapeError("patch_embed: expected [P, K, 3] patches, got " + shape_str(patches.shape()));
  }
  for (T v : patches.values())
    if (!std::isfinite(v)) throw NumericError("patch_embed: non-finite patch coordinate");
  const std::size_t count = patches.dim(0), k = patches.dim(1);
  Tensor<T> flat = ops::reshape(patches, {count * k, 3});
  Tensor<T> features = mlp2(p, slots_.embed1, slots_.embed2, flat);
  features = ops::reshape(features, {count, k, config_.encoder_dim});
  return ops::max_axis(features, 1).values;
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::encoder_pos_embed(Params p, const Tensor<T>& seeds) const {
  return mlp2(p, slots_.enc_pos1, slots_.enc_pos2, seeds);
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::decoder_pos_embed(Params p, const Tensor<T>& seeds) const {
  return mlp2(p, slots_.dec_pos1, slots_.dec_pos2, seeds);
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::attention(Params p, const BlockSlots& b, const Tensor<T>& x) const {
  const std::size_t heads = b.query.size();
  const std::size_t d = x.dim(1) / heads;
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<Tensor<T>> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor<T> q = ops::matmul(x, p[b.query[h]]);
    const Tensor<T> k = ops::matmul(x, p[b.key[h]]);
    const Tensor<T> v = ops::matmul(x, p[b.value[h]]);
    const Tensor<T> weights = ops::softmax_rows(ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt_d));
    outputs.push_back(ops::matmul(weights, v));
  }
  const Tensor<T> merged = heads == 1 ? outputs[0] : ops::concat<T>(outputs, 1);
  return linear(p, b.out, merged);
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::block(Params p, const BlockSlots& b, const Tensor<T>& x) const {
  Tensor<T> h = ops::add(x, attention(p, b, norm(p, b.norm1, x)));
  return ops::add(h, mlp2(p, b.fc1, b.fc2, norm(p, b.norm2, h)));
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::encoder_stack(Params p, const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (const auto& b : slots_.encoder) h = block(p, b, h);
  return h;
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::decoder_stack(Params p, const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (const auto& b : slots_.decoder) h = block(p, b, h);
  return h;
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::encode_tokens(Params p, const Tensor<T>& patches, const Tensor<T>& seeds) const {
  if (patches.rank() != 3 || patches.dim(0) == 0) throw UsageError("encode: at least one visible patch is required");
  if (seeds.rank() != 2 || seeds.dim(0) != patches.dim(0) || seeds.dim(1) != 3) {
    throw ShapeError("encode: seeds " + shape_str(seeds.shape()) + " do not match patches " +
                     shape_str(patches.shape()));
  }
  const Tensor<T> tokens = ops::add(patch_embed(p, patches), encoder_pos_embed(p, seeds));
  return norm(p, slots_.encoder_norm, encoder_stack(p, tokens));
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::project(Params p, const Tensor<T>& tokens) const {
  return linear(p, slots_.proj, tokens);
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::encode(Params p, const Tensor<T>& patches, const Tensor<T>& seeds) const {
  return project(p, encode_tokens(p, patches, seeds));
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::decode(Params p, const Tensor<T>& encoded_visible, const OcclusionMask& mask,
                                          const Tensor<T>& all_seeds) const {
  const std::size_t groups = mask.groups();
  if (all_seeds.rank() != 2 || all_seeds.dim(0) != groups) {
    throw UsageError("decode: mask covers " + std::to_string(groups) + " patches but seeds are " +
                     shape_str(all_seeds.shape()));
  }
  if (encoded_visible.rank() != 2 || encoded_visible.dim(0) != mask.visible.size() ||
      encoded_visible.dim(1) != config_.decoder_dim) {
    throw ShapeError("decode: encoded tokens " + shape_str(encoded_visible.shape()) + " do not match " +
                     std::to_string(mask.visible.size()) + " visible patches at C_d=" +
                     std::to_string(config_.decoder_dim));
  }
  const std::size_t visible = mask.visible.size();
  Tensor<T> stacked = encoded_visible;
  if (!mask.occluded.empty()) {
    const Tensor<T> token = ops::reshape(p[slots_.occlusion_token], {1, config_.decoder_dim});
    const std::vector<std::size_t> copies(mask.occluded.size(), 0);
    const Tensor<T> parts[] = {encoded_visible, ops::gather_rows(token, copies)};
    stacked = ops::concat<T>(parts, 0);
  }
  std::vector<std::size_t> order(groups);
  for (std::size_t i = 0; i < visible; ++i) order[mask.visible[i]] = i;
  for (std::size_t j = 0; j < mask.occluded.size(); ++j) order[mask.occluded[j]] = visible + j;
  const Tensor<T> full = ops::gather_rows(stacked, order);
  return decoder_stack(p, ops::add(full, decoder_pos_embed(p, all_seeds)));
}

template <typename T>
Tensor<T> OcclusionAutoEncoder<T>::reconstruct(const Tensor<T>& decoded, const OcclusionMask& mask,
                                               const Tensor<T>& all_seeds) const {
  const std::size_t k = config_.patch_size;
  if (decoded.rank() != 2 || decoded.dim(1) != 3 * k) {
    throw ShapeError("reconstruct: decoder width " + shape_str(decoded.shape()) + " is not 3 * K = " +
                     std::to_string(3 * k));
  }
  if (decoded.dim(0) != mask.groups() || all_seeds.dim(0) != mask.groups()) {
    throw ShapeError("reconstruct: decoded rows, mask, and seeds disagree");
  }
  const std::size_t r = mask.occluded.size();
  const Tensor<T> rows = ops::gather_rows(decoded, mask.occluded);
  const Tensor<T> offsets = ops::reshape(rows, {r * k, 3});
  std::vector<std::size_t> seed_rows;
  seed_rows.reserve(r * k);
  for (std::size_t g : mask.occluded) seed_rows.insert(seed_rows.end(), k, g);
  return ops::add(offsets, ops::gather_rows(all_seeds, seed_rows));
}

template <typename T>
Tensor<T> patches_tensor(const PatchSet& patches, std::span<const std::size_t> which) {
  std::vector<T> v;
  v.reserve(which.size() * patches.patch_size * 3);
  for (std::size_t g : which)
    for (const auto& off : patches.patch(g))
      for (double c : off) v.push_back(static_cast<T>(c));
  return Tensor<T>({which.size(), patches.patch_size, 3}, std::move(v));
}

template <typename T>
Tensor<T> seeds_tensor(const PatchSet& patches, std::span<const std::size_t> which) {
  std::vector<Point3> pts;
  pts.reserve(which.size());
  for (std::size_t g : which) pts.push_back(patches.seeds[g]);
  return to_tensor<T>(pts);
}

template <typename T>
Tensor<T> seeds_tensor(const PatchSet& patches) {
  return to_tensor<T>(patches.seeds);
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class OcclusionAutoEncoder<float>;
template class OcclusionAutoEncoder<double>;
template Tensor<float> patches_tensor(const PatchSet&, std::span<const std::size_t>);
template Tensor<double> patches_tensor(const PatchSet&, std::span<const std::size_t>);
template Tensor<float> seeds_tensor(const PatchSet&, std::span<const std::size_t>);
template Tensor<double> seeds_tensor(const PatchSet&, std::span<const std::size_t>);
template Tensor<float> seeds_tensor(const PatchSet&);
template Tensor<double> seeds_tensor(const PatchSet&);

}  // namespace oae
