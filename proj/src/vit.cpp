#include "zsl/vit.hpp"

#include <algorithm>

#include "zsl/errors.hpp"
#include "zsl/ops.hpp"

namespace zsl {

void ViTConfig::validate() const {
  if (height == 0 || width == 0 || channels == 0 || patch == 0 || dim == 0 || depth == 0 || heads == 0 ||
      mlp_ratio == 0 || num_attributes == 0) {
    throw ValidationError("ViT config values must all be positive");
  }
  if (height % patch != 0 || width % patch != 0) {
    throw ValidationError("image " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible by patch size " + std::to_string(patch));
  }
  if (dim % heads != 0) {
    throw ValidationError("hidden dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
  }
}

ViTConfig desk_config(std::size_t num_attributes) {
  ViTConfig c;
  c.num_attributes = num_attributes;
  return c;
}

ViTConfig paper_scale_config(std::size_t num_attributes) {
  ViTConfig c;
  c.height = c.width = 224;
  c.patch = 16;
  c.dim = 1024;
  c.depth = 24;
  c.heads = 16;
  c.num_attributes = num_attributes;
  return c;
}

std::size_t parameter_count(const ViTConfig& c) {
  const std::size_t d = c.dim, hid = c.hidden_dim();
  const std::size_t embed = c.patch_dim() * d + d + c.seq_len() * d;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t mlp = d * hid + hid + hid * d + d;
  const std::size_t norms = 4 * d;
  const std::size_t heads = d * c.num_attributes + c.num_attributes + d * kNumRotations + kNumRotations;
  return embed + c.depth * (attn + mlp + norms) + 2 * d + heads;
}

// ---------------------------------------------------------------------------

ViTModel::ViTModel(const ViTConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim, hid = config_.hidden_dim();
  patch_projection = Tensor({config_.patch_dim(), d});
  class_token = Tensor({d});
  position_embeddings = Tensor({config_.seq_len(), d});
  layers.resize(config_.depth);
  for (auto& l : layers) {
    l.norm1_gain = Tensor({d});
    l.norm1_bias = Tensor({d});
    l.query_w = Tensor({d, d});
    l.query_b = Tensor({d});
    l.key_w = Tensor({d, d});
    l.key_b = Tensor({d});
    l.value_w = Tensor({d, d});
    l.value_b = Tensor({d});
    l.out_w = Tensor({d, d});
    l.out_b = Tensor({d});
    l.norm2_gain = Tensor({d});
    l.norm2_bias = Tensor({d});
    l.mlp_in_w = Tensor({d, hid});
    l.mlp_in_b = Tensor({hid});
    l.mlp_out_w = Tensor({hid, d});
    l.mlp_out_b = Tensor({d});
  }
  final_gain = Tensor({d});
  final_bias = Tensor({d});
  attribute_w = Tensor({d, config_.num_attributes});
  attribute_b = Tensor({config_.num_attributes});
  rotation_w = Tensor({d, kNumRotations});
  rotation_b = Tensor({kNumRotations});
  register_parameters();
}

void ViTModel::register_parameters() {
  params_.clear();
  params_.push_back({"patch_projection", patch_projection});
  params_.push_back({"class_token", class_token});
  params_.push_back({"position_embeddings", position_embeddings});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    params_.push_back({p + "norm1.gain", l.norm1_gain});
    params_.push_back({p + "norm1.bias", l.norm1_bias});
    params_.push_back({p + "attn.query.w", l.query_w});
    params_.push_back({p + "attn.query.b", l.query_b});
    params_.push_back({p + "attn.key.w", l.key_w});
    params_.push_back({p + "attn.key.b", l.key_b});
    params_.push_back({p + "attn.value.w", l.value_w});
    params_.push_back({p + "attn.value.b", l.value_b});
    params_.push_back({p + "attn.out.w", l.out_w});
    params_.push_back({p + "attn.out.b", l.out_b});
    params_.push_back({p + "norm2.gain", l.norm2_gain});
    params_.push_back({p + "norm2.bias", l.norm2_bias});
    params_.push_back({p + "mlp.in.w", l.mlp_in_w});
    params_.push_back({p + "mlp.in.b", l.mlp_in_b});
    params_.push_back({p + "mlp.out.w", l.mlp_out_w});
    params_.push_back({p + "mlp.out.b", l.mlp_out_b});
  }
  params_.push_back({"final_norm.gain", final_gain});
  params_.push_back({"final_norm.bias", final_bias});
  params_.push_back({"attribute_head.w", attribute_w});
  params_.push_back({"attribute_head.b", attribute_b});
  params_.push_back({"rotation_head.w", rotation_w});
  params_.push_back({"rotation_head.b", rotation_b});
  for (auto& p : params_) p.tensor.set_requires_grad(true);
}

namespace {

bool is_norm_gain(const std::string& name) { return name.ends_with("gain"); }
bool is_bias(const std::string& name) { return name.ends_with(".b") || name.ends_with("bias"); }

}  // namespace

ViTModel ViTModel::zeros(const ViTConfig& config) {
  ViTModel m(config);
  for (auto& p : m.params_) {
    if (is_norm_gain(p.name)) std::fill(p.tensor.values().begin(), p.tensor.values().end(), 1.0);
  }
  return m;
}

ViTModel ViTModel::initialize(const ViTConfig& config, Rng& rng) {
  ViTModel m = zeros(config);
  for (auto& p : m.params_) {
    if (is_norm_gain(p.name) || is_bias(p.name)) continue;
    for (double& v : p.tensor.values()) v = rng.truncated_normal(0.02);
  }
  return m;
}

ViTModel ViTModel::clone() const {
  ViTModel m(config_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = params_[i].tensor.values();
    std::copy(src.begin(), src.end(), m.params_[i].tensor.values().begin());
  }
  return m;
}

Tensor& ViTModel::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("no parameter named '" + name + "'");
}

std::uint64_t ViTModel::parameter_hash() const {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& p : params_) {
    h = fnv1a(p.name.data(), p.name.size(), h);
    auto v = p.tensor.values();
    h = fnv1a(v.data(), v.size() * sizeof(double), h);
  }
  return h;
}

void ViTModel::set_requires_grad(bool on) {
  for (auto& p : params_) p.tensor.set_requires_grad(on);
}

void ViTModel::zero_grad() {
  for (auto& p : params_) {
    p.tensor.ensure_grad();
    p.tensor.zero_grad();
  }
}

// ---------------------------------------------------------------------------

Tensor extract_patches(std::span<const Tensor> images, const ViTConfig& c) {
  if (images.empty()) throw DimensionError("extract_patches: empty image list");
  const std::size_t n = c.num_patches(), pd = c.patch_dim(), gw = c.width / c.patch;
  Tensor out({images.size() * n, pd});
  auto o = out.values();
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Tensor& img = images[b];
    if (img.shape() != Shape{c.height, c.width, c.channels}) {
      throw DimensionError("image " + shape_str(img.shape()) + " does not match model geometry " +
                           shape_str({c.height, c.width, c.channels}));
    }
    auto px = img.values();
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t r0 = (p / gw) * c.patch, c0 = (p % gw) * c.patch;
      double* dst = o.data() + (b * n + p) * pd;
      for (std::size_t y = 0; y < c.patch; ++y) {
        const double* src = px.data() + ((r0 + y) * c.width + c0) * c.channels;
        std::copy_n(src, c.patch * c.channels, dst + y * c.patch * c.channels);
      }
    }
  }
  return out;
}

Tensor patch_embed(const ViTModel& model, std::span<const Tensor> images) {
  const auto& c = model.config();
  Tensor patches = extract_patches(images, c);
  Tensor projected = matmul(patches, model.patch_projection);
  Tensor with_cls = prepend_token(projected, model.class_token, images.size());
  return add_tiled(with_cls, model.position_embeddings);
}

Tensor patch_embed(const ViTModel& model, const Tensor& image) {
  return patch_embed(model, std::span<const Tensor>(&image, 1));
}

MhaOutput mha(const Tensor& z, const EncoderLayer& layer, const ViTConfig& config, std::size_t batch) {
  Tensor q = linear(z, layer.query_w, layer.query_b);
  Tensor k = linear(z, layer.key_w, layer.key_b);
  Tensor v = linear(z, layer.value_w, layer.value_b);
  AttentionResult att = multi_head_attention(q, k, v, batch, config.heads);
  return {linear(att.output, layer.out_w, layer.out_b), att.probabilities};
}

BlockOutput encoder_block(const Tensor& z, const EncoderLayer& layer, const ViTConfig& config, std::size_t batch) {
  MhaOutput attn = mha(layer_norm(z, layer.norm1_gain, layer.norm1_bias), layer, config, batch);
  Tensor z_mid = add(attn.output, z);
  Tensor hidden = gelu(linear(layer_norm(z_mid, layer.norm2_gain, layer.norm2_bias), layer.mlp_in_w, layer.mlp_in_b));
  Tensor z_out = add(linear(hidden, layer.mlp_out_w, layer.mlp_out_b), z_mid);
  return {z_out, attn.probabilities};
}

EncodeOutput encode(const ViTModel& model, std::span<const Tensor> images) {
  const auto& c = model.config();
  const std::size_t b = images.size();
  Tensor z = patch_embed(model, images);
  EncodeOutput out;
  out.probabilities.reserve(c.depth);
  for (const auto& layer : model.layers) {
    BlockOutput block = encoder_block(z, layer, c, b);
    z = block.output;
    out.probabilities.push_back(block.probabilities);
  }
  std::vector<std::size_t> cls_rows(b);
  for (std::size_t i = 0; i < b; ++i) cls_rows[i] = i * c.seq_len();
  out.representation = layer_norm(select_rows(z, cls_rows), model.final_gain, model.final_bias);
  return out;
}

Tensor attribute_head(const ViTModel& model, const Tensor& representation) {
  return linear(representation, model.attribute_w, model.attribute_b);
}

Tensor rotation_head(const ViTModel& model, const Tensor& representation) {
  return linear(representation, model.rotation_w, model.rotation_b);
}

AttentionTrace trace_for(const EncodeOutput& encoded, const ViTConfig& config, std::size_t b) {
  AttentionTrace t;
  t.layers = config.depth;
  t.heads = config.heads;
  t.tokens = config.seq_len();
  t.grid_h = config.height / config.patch;
  t.grid_w = config.width / config.patch;
  const std::size_t per_image = t.heads * t.tokens * t.tokens;
  t.probs.reserve(t.layers * per_image);
  for (const Tensor& p : encoded.probabilities) {
    auto v = p.values();
    t.probs.insert(t.probs.end(), v.begin() + static_cast<std::ptrdiff_t>(b * per_image),
                   v.begin() + static_cast<std::ptrdiff_t>((b + 1) * per_image));
  }
  return t;
}

ForwardOutput forward(const ViTModel& model, const Tensor& image) {
  EncodeOutput enc = encode(model, std::span<const Tensor>(&image, 1));
  ForwardOutput out;
  const std::size_t d = model.config().dim;
  out.attributes = reshape(attribute_head(model, enc.representation), {model.config().num_attributes});
  out.rotation_logits = reshape(rotation_head(model, enc.representation), {kNumRotations});
  out.representation = reshape(enc.representation, {d});
  out.trace = trace_for(enc, model.config(), 0);
  return out;
}

}  // namespace zsl
