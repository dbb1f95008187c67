#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "oae/geometry.hpp"
#include "oae/tensor.hpp"

namespace oae {

struct ModelConfig {
  std::size_t points = 1024;        // N
  std::size_t groups = 64;          // G
  std::size_t patch_size = 32;      // K
  std::size_t encoder_dim = 384;    // C_e
  std::size_t decoder_dim = 96;     // C_d, must equal 3 * K
  std::size_t encoder_depth = 12;   // H_e
  std::size_t decoder_depth = 12;   // H_d
  std::size_t heads = 6;
  std::size_t mlp_ratio = 4;
  std::size_t embed_hidden = 128;   // hidden width of the patch and position MLPs
  double norm_eps = 1e-6;
  double init_std = 0.02;

  // Throws UsageError naming the violated constraint.
  void validate() const;
};

// Named parameters in registration order. Names are unique.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool decay;  // subject to decoupled weight decay
  };

  std::size_t add(std::string name, Tensor<T> value, bool decay);

  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index(const std::string& name) const;  // throws if absent
  std::size_t scalar_count() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

struct LinearSlots {
  std::size_t weight = 0;
  std::optional<std::size_t> bias;
};

struct NormSlots {
  std::size_t gamma = 0;
  std::size_t beta = 0;
};

struct BlockSlots {
  NormSlots norm1;
  std::vector<std::size_t> query, key, value;  // one [C, C/heads] matrix per head
  LinearSlots out;
  NormSlots norm2;
  LinearSlots fc1, fc2;
};

struct ModelSlots {
  LinearSlots embed1, embed2;
  LinearSlots enc_pos1, enc_pos2;
  std::vector<BlockSlots> encoder;
  NormSlots encoder_norm;
  LinearSlots proj;
  std::size_t occlusion_token = 0;
  LinearSlots dec_pos1, dec_pos2;
  std::vector<BlockSlots> decoder;
};

// Patch embedding, position MLPs, Transformer encoder over visible patches,
// and the lightweight decoder that fills occluded positions with a shared
// learnable token. Forward methods take the parameter tensors explicitly so
// the same weights can be evaluated plainly or as leaves of a tape.
template <typename T>
class OcclusionAutoEncoder {
 public:
  using Params = std::span<const Tensor<T>>;

  OcclusionAutoEncoder(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const ModelSlots& slots() const { return slots_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  // Parameters as tape leaves, in registration order.
  std::vector<Tensor<T>> bind(Tape<T>& tape) const;
  // Parameters as plain tensors.
  std::vector<Tensor<T>> values() const;

  // [P, K, 3] centralized patches -> [P, C_e]: shared point MLP then max over points.
  Tensor<T> patch_embed(Params p, const Tensor<T>& patches) const;
  // [P, 3] seeds -> [P, C_e] or [P, C_d].
  Tensor<T> encoder_pos_embed(Params p, const Tensor<T>& seeds) const;
  Tensor<T> decoder_pos_embed(Params p, const Tensor<T>& seeds) const;

  Tensor<T> attention(Params p, const BlockSlots& block, const Tensor<T>& x) const;
  Tensor<T> block(Params p, const BlockSlots& block, const Tensor<T>& x) const;
  Tensor<T> encoder_stack(Params p, const Tensor<T>& x) const;
  Tensor<T> decoder_stack(Params p, const Tensor<T>& x) const;

  // Encoder tokens at C_e after the final norm (pre-projection).
  Tensor<T> encode_tokens(Params p, const Tensor<T>& patches, const Tensor<T>& seeds) const;
  // encode_tokens followed by the C_e -> C_d projection.
  Tensor<T> encode(Params p, const Tensor<T>& patches, const Tensor<T>& seeds) const;
  Tensor<T> project(Params p, const Tensor<T>& tokens) const;

  // Scatters encoded visible tokens and copies of the occlusion token into
  // patch-index order, adds decoder position embeddings for all seeds, and
  // runs the decoder blocks. Returns [G, C_d].
  Tensor<T> decode(Params p, const Tensor<T>& encoded_visible, const OcclusionMask& mask,
                   const Tensor<T>& all_seeds) const;

  // Occluded rows reshaped to [K, 3] patches, shifted by their seeds: [R*K, 3].
  Tensor<T> reconstruct(const Tensor<T>& decoded, const OcclusionMask& mask, const Tensor<T>& all_seeds) const;

 private:
  Tensor<T> linear(Params p, const LinearSlots& l, const Tensor<T>& x) const;
  Tensor<T> norm(Params p, const NormSlots& n, const Tensor<T>& x) const;
  Tensor<T> mlp2(Params p, const LinearSlots& a, const LinearSlots& b, const Tensor<T>& x) const;

  ModelConfig config_;
  ParameterSet<T> params_;
  ModelSlots slots_;
};

// [P, K, 3] tensor of the offsets of the selected patches.
template <typename T>
Tensor<T> patches_tensor(const PatchSet& patches, std::span<const std::size_t> which);

// [P, 3] tensor of the seeds of the selected patches.
template <typename T>
Tensor<T> seeds_tensor(const PatchSet& patches, std::span<const std::size_t> which);

// [G, 3] tensor of all seeds.
template <typename T>
Tensor<T> seeds_tensor(const PatchSet& patches);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class OcclusionAutoEncoder<float>;
extern template class OcclusionAutoEncoder<double>;

}  // namespace oae
