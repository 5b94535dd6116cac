#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "zsl/adam.hpp"
#include "zsl/rng.hpp"
#include "zsl/tensor.hpp"

namespace zsl {

struct ViTConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::size_t patch = 8;
  std::size_t dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t num_attributes = 16;

  std::size_t num_patches() const { return (height / patch) * (width / patch); }
  std::size_t seq_len() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch * patch * channels; }
  std::size_t head_dim() const { return dim / heads; }
  std::size_t hidden_dim() const { return dim * mlp_ratio; }

  void validate() const;
  bool operator==(const ViTConfig&) const = default;
};

// 32x32x3, P=8, D=64, L=4, 4 heads.
ViTConfig desk_config(std::size_t num_attributes);
// 224x224x3, P=16, D=1024, L=24, 16 heads. Shape arithmetic only; far too
// large to allocate here.
ViTConfig paper_scale_config(std::size_t num_attributes);

// Closed-form number of trainable scalars for a config.
std::size_t parameter_count(const ViTConfig& config);

inline constexpr std::size_t kNumRotations = 4;

struct EncoderLayer {
  Tensor norm1_gain, norm1_bias;
  Tensor query_w, query_b, key_w, key_b, value_w, value_b;
  Tensor out_w, out_b;
  Tensor norm2_gain, norm2_bias;
  Tensor mlp_in_w, mlp_in_b, mlp_out_w, mlp_out_b;
};

// Attention probabilities of one image: [depth x heads x T x T], T = N + 1.
struct AttentionTrace {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t tokens = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<double> probs;

  double at(std::size_t layer, std::size_t head, std::size_t row, std::size_t col) const {
    return probs[((layer * heads + head) * tokens + row) * tokens + col];
  }
};

class ViTModel {
 public:
  // Truncated normal (std 0.02) for projections and embeddings; zero biases;
  // unit layer-norm gains.
  static ViTModel initialize(const ViTConfig& config, Rng& rng);
  // Every parameter zero except layer-norm gains (one).
  static ViTModel zeros(const ViTConfig& config);

  ViTModel(const ViTModel&) = delete;
  ViTModel& operator=(const ViTModel&) = delete;
  ViTModel(ViTModel&&) = default;
  ViTModel& operator=(ViTModel&&) = default;

  // Deep copy with independent storage.
  ViTModel clone() const;

  const ViTConfig& config() const { return config_; }
  // Declaration order; handles alias the fields below.
  ParameterList& parameters() { return params_; }
  const ParameterList& parameters() const { return params_; }
  Tensor& parameter(const std::string& name);

  std::uint64_t parameter_hash() const;
  void set_requires_grad(bool on);
  void zero_grad();

  Tensor patch_projection;     // E: (P*P*C) x D
  Tensor class_token;          // D
  Tensor position_embeddings;  // (N+1) x D
  std::vector<EncoderLayer> layers;
  Tensor final_gain, final_bias;
  Tensor attribute_w, attribute_b;  // D -> M
  Tensor rotation_w, rotation_b;    // D -> 4

 private:
  explicit ViTModel(const ViTConfig& config);
  void register_parameters();

  ViTConfig config_;
  ParameterList params_;
};

// [B*N x P*P*C]: row-major patch order, each patch flattened row-major with
// channels last.
Tensor extract_patches(std::span<const Tensor> images, const ViTConfig& config);

// z0 = [x_class; x_p^1 E; ...; x_p^N E] + E_pos for every image: [B*(N+1) x D].
Tensor patch_embed(const ViTModel& model, std::span<const Tensor> images);
// Single image, [(N+1) x D].
Tensor patch_embed(const ViTModel& model, const Tensor& image);

struct MhaOutput {
  Tensor output;         // [B*T x D]
  Tensor probabilities;  // [B x heads x T x T]
};

// Multi-head self-attention with output projection over B sequences.
MhaOutput mha(const Tensor& z, const EncoderLayer& layer, const ViTConfig& config, std::size_t batch);

struct BlockOutput {
  Tensor output;
  Tensor probabilities;
};

// z' = MHA(Norm(z)) + z ; z_out = MLP(Norm(z')) + z'.
BlockOutput encoder_block(const Tensor& z, const EncoderLayer& layer, const ViTConfig& config, std::size_t batch);

struct EncodeOutput {
  Tensor representation;              // [B x D], Norm(z_L^0)
  std::vector<Tensor> probabilities;  // per layer [B x heads x T x T]
};

EncodeOutput encode(const ViTModel& model, std::span<const Tensor> images);

Tensor attribute_head(const ViTModel& model, const Tensor& representation);
Tensor rotation_head(const ViTModel& model, const Tensor& representation);

// Trace of image b from a batched encode.
AttentionTrace trace_for(const EncodeOutput& encoded, const ViTConfig& config, std::size_t b);

struct ForwardOutput {
  Tensor representation;  // [D]
  Tensor attributes;      // [M]
  Tensor rotation_logits; // [4]
  AttentionTrace trace;
};

ForwardOutput forward(const ViTModel& model, const Tensor& image);

}  // namespace zsl
