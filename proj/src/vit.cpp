#include "cvit/vit.hpp"

#include <cmath>

#include "cvit/autodiff.hpp"
#include "cvit/errors.hpp"
#include "cvit/lora.hpp"
#include "cvit/ops.hpp"
#include "cvit/random.hpp"

namespace cvit {

ViTConfig ViTConfig::vit_b16(std::size_t num_classes) {
  ViTConfig c;
  c.num_classes = num_classes;
  return c;
}

ViTConfig ViTConfig::toy(std::size_t num_classes) {
  ViTConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.num_heads = 2;
  c.mlp_dim = 32;
  c.num_classes = num_classes;
  return c;
}

void ViTConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || embed_dim == 0 || depth == 0 || num_heads == 0 ||
      mlp_dim == 0 || num_classes == 0) {
    throw ParameterError("ViT config fields must all be positive");
  }
  if (image_size % patch_size != 0) {
    throw GeometryError("image_size " + std::to_string(image_size) +
                        " is not divisible by patch_size " + std::to_string(patch_size));
  }
  if (embed_dim % num_heads != 0) {
    throw ParameterError("embed_dim " + std::to_string(embed_dim) +
                         " is not divisible by num_heads " + std::to_string(num_heads));
  }
}

ParamBreakdown closed_form_params(const ViTConfig& c) {
  const std::size_t d = c.embed_dim;
  ParamBreakdown p;
  p.patch_embed = c.patch_dim() * d + d;
  p.cls_token = d;
  p.pos_embed = c.num_tokens() * d;
  p.per_block = 2 * d                      // norm1
                + 4 * (d * d + d)          // q, k, v, out
                + 2 * d                    // norm2
                + (c.mlp_dim * d + c.mlp_dim) + (d * c.mlp_dim + d);
  p.blocks = c.depth * p.per_block;
  p.final_norm = 2 * d;
  p.head = c.num_classes * d + c.num_classes;
  p.total = p.patch_embed + p.cls_token + p.pos_embed + p.blocks + p.final_norm + p.head;
  return p;
}

std::size_t closed_form_adapter_params(const ViTConfig& config, const LoraConfig& lora) {
  return config.depth * lora.targets.size() * 2 * config.embed_dim * lora.rank;
}

std::string block_prefix(std::size_t block) { return "blocks." + std::to_string(block) + "."; }

template <typename T>
void ParameterRegistry<T>::add(std::string name, Tensor<T> tensor) {
  if (contains(name)) throw StateError("parameter '" + name + "' registered twice");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

template <typename T>
Tensor<T>& ParameterRegistry<T>::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
const Tensor<T>& ParameterRegistry<T>::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
std::size_t ParameterRegistry<T>::count(bool trainable_only) const {
  std::size_t total = 0;
  for (const auto& [name, tensor] : entries_) {
    if (!trainable_only || tensor.requires_grad()) total += tensor.numel();
  }
  return total;
}

template <typename T>
std::size_t ParameterRegistry<T>::remove_prefix(const std::string& prefix) {
  std::vector<Entry> kept;
  kept.reserve(entries_.size());
  for (auto& entry : entries_) {
    if (entry.first.rfind(prefix, 0) != 0) kept.push_back(std::move(entry));
  }
  const std::size_t removed = entries_.size() - kept.size();
  entries_ = std::move(kept);
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].first, i);
  return removed;
}

namespace {

enum class InitKind { kTruncNormal, kXavier, kZeros, kOnes };

template <typename T>
Tensor<T> make_param(const Shape& shape, InitKind kind, Rng& rng, bool random) {
  Tensor<T> t(shape);
  auto v = t.mutable_data();
  if (kind == InitKind::kOnes) {
    std::fill(v.begin(), v.end(), T{1});
    return t;
  }
  if (!random || kind == InitKind::kZeros) return t;
  if (kind == InitKind::kTruncNormal) {
    for (T& x : v) x = static_cast<T>(rng.truncated_normal(0.02));
  } else {
    // Weight [fan_out × fan_in].
    const double fan_out = static_cast<double>(shape[0]);
    const double fan_in = static_cast<double>(shape.size() > 1 ? shape[1] : 1);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (T& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  }
  return t;
}

}  // namespace

template <typename T>
ViTModel<T>::ViTModel(const ViTConfig& config, std::uint64_t seed, Init init) : config_(config) {
  config_.validate();
  const std::size_t d = config_.embed_dim;
  const bool random = init == Init::kRandom;
  Rng rng(seed);
  auto add = [&](const std::string& name, Shape shape, InitKind kind) {
    registry_.add(name, make_param<T>(shape, kind, rng, random));
  };
  add("patch_embed.weight", {d, config_.patch_dim()}, InitKind::kTruncNormal);
  add("patch_embed.bias", {d}, InitKind::kZeros);
  add("cls_token", {1, d}, InitKind::kTruncNormal);
  add("pos_embed", {config_.num_tokens(), d}, InitKind::kTruncNormal);
  for (std::size_t i = 0; i < config_.depth; ++i) {
    const std::string p = block_prefix(i);
    add(p + "norm1.weight", {d}, InitKind::kOnes);
    add(p + "norm1.bias", {d}, InitKind::kZeros);
    for (const char* proj : {"q", "k", "v", "o"}) {
      add(p + "attn.w_" + proj, {d, d}, InitKind::kXavier);
      add(p + "attn.b_" + proj, {d}, InitKind::kZeros);
    }
    add(p + "norm2.weight", {d}, InitKind::kOnes);
    add(p + "norm2.bias", {d}, InitKind::kZeros);
    add(p + "mlp.fc1.weight", {config_.mlp_dim, d}, InitKind::kXavier);
    add(p + "mlp.fc1.bias", {config_.mlp_dim}, InitKind::kZeros);
    add(p + "mlp.fc2.weight", {d, config_.mlp_dim}, InitKind::kXavier);
    add(p + "mlp.fc2.bias", {d}, InitKind::kZeros);
  }
  add("norm.weight", {d}, InitKind::kOnes);
  add("norm.bias", {d}, InitKind::kZeros);
  add("head.weight", {config_.num_classes, d}, InitKind::kTruncNormal);
  add("head.bias", {config_.num_classes}, InitKind::kZeros);
}

template <typename T>
ViTModel<T> ViTModel<T>::clone() const {
  ParameterRegistry<T> copy;
  for (const auto& [name, tensor] : registry_.entries()) {
    Tensor<T> t = tensor.clone();
    t.set_requires_grad(tensor.requires_grad());
    copy.add(name, std::move(t));
  }
  return ViTModel(config_, std::move(copy), lora_);
}

template <typename T>
Tensor<T> extract_patches(const FloatImage<T>& img, std::size_t patch_size) {
  if (img.values.size() != 3 * img.height * img.width) {
    throw DimensionError("image buffer holds " + std::to_string(img.values.size()) +
                         " values, expected 3x" + std::to_string(img.height) + "x" +
                         std::to_string(img.width));
  }
  if (patch_size == 0 || img.height % patch_size != 0 || img.width % patch_size != 0) {
    throw DimensionError("image " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + " does not tile into " +
                         std::to_string(patch_size) + "x" + std::to_string(patch_size) +
                         " patches");
  }
  const std::size_t p = patch_size;
  const std::size_t gh = img.height / p;
  const std::size_t gw = img.width / p;
  const std::size_t len = 3 * p * p;
  Tensor<T> out(Shape{gh * gw, len});
  auto o = out.mutable_data();
  for (std::size_t by = 0; by < gh; ++by) {
    for (std::size_t bx = 0; bx < gw; ++bx) {
      T* row = o.data() + (by * gw + bx) * len;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            row[(c * p + y) * p + x] = img.at(c, by * p + y, bx * p + x);
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> patch_embed(const FloatImage<T>& img, const Tensor<T>& weight, const Tensor<T>& bias,
                      std::size_t patch_size) {
  return linear(extract_patches(img, patch_size), weight, bias);
}

template <typename T>
BlockWeights<T> BlockWeights<T>::from_model(const ViTModel<T>& model, std::size_t block) {
  const std::string p = block_prefix(block);
  const auto& r = model.registry();
  BlockWeights<T> w;
  w.norm1_w = r.get(p + "norm1.weight");
  w.norm1_b = r.get(p + "norm1.bias");
  w.w_q = r.get(p + "attn.w_q");
  w.b_q = r.get(p + "attn.b_q");
  w.w_k = r.get(p + "attn.w_k");
  w.b_k = r.get(p + "attn.b_k");
  w.w_v = r.get(p + "attn.w_v");
  w.b_v = r.get(p + "attn.b_v");
  w.w_o = r.get(p + "attn.w_o");
  w.b_o = r.get(p + "attn.b_o");
  w.norm2_w = r.get(p + "norm2.weight");
  w.norm2_b = r.get(p + "norm2.bias");
  w.fc1_w = r.get(p + "mlp.fc1.weight");
  w.fc1_b = r.get(p + "mlp.fc1.bias");
  w.fc2_w = r.get(p + "mlp.fc2.weight");
  w.fc2_b = r.get(p + "mlp.fc2.bias");
  if (const auto& lora = model.lora()) {
    w.lora_scale = static_cast<T>(lora->scaling());
    const std::string q = projection_name(block, LoraTarget::kQuery);
    const std::string v = projection_name(block, LoraTarget::kValue);
    if (r.contains(adapter_a_name(q))) {
      w.lora_q_a = r.get(adapter_a_name(q));
      w.lora_q_b = r.get(adapter_b_name(q));
    }
    if (r.contains(adapter_a_name(v))) {
      w.lora_v_a = r.get(adapter_a_name(v));
      w.lora_v_b = r.get(adapter_b_name(v));
    }
  }
  return w;
}

namespace {

template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                  const Tensor<T>& lora_a, const Tensor<T>& lora_b, T scaling) {
  if (lora_a.defined()) return lora_project(x, w, b, lora_a, lora_b, scaling);
  return linear(x, w, b);
}

}  // namespace

template <typename T>
Tensor<T> attention_block(const Tensor<T>& tokens, const BlockWeights<T>& w,
                          std::size_t num_heads, std::vector<Tensor<T>>* attention_maps) {
  if (tokens.rank() != 2 || tokens.dim(1) != w.w_q.dim(0)) {
    throw DimensionError("attention_block: tokens " + shape_string(tokens.shape()) +
                         " do not match projection " + shape_string(w.w_q.shape()));
  }
  const std::size_t d = tokens.dim(1);
  if (num_heads == 0 || d % num_heads != 0) {
    throw DimensionError("attention_block: embed dim " + std::to_string(d) +
                         " not divisible by " + std::to_string(num_heads) + " heads");
  }
  const std::size_t head_dim = d / num_heads;
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(head_dim));

  const Tensor<T> h = layer_norm(tokens, w.norm1_w, w.norm1_b);
  const Tensor<T> q = project(h, w.w_q, w.b_q, w.lora_q_a, w.lora_q_b, w.lora_scale);
  const Tensor<T> k = linear(h, w.w_k, w.b_k);
  const Tensor<T> v = project(h, w.w_v, w.b_v, w.lora_v_a, w.lora_v_b, w.lora_scale);

  std::vector<Tensor<T>> heads;
  heads.reserve(num_heads);
  if (attention_maps != nullptr) attention_maps->clear();
  for (std::size_t i = 0; i < num_heads; ++i) {
    const std::size_t start = i * head_dim;
    const Tensor<T> qh = slice_cols(q, start, head_dim);
    const Tensor<T> kh = slice_cols(k, start, head_dim);
    const Tensor<T> vh = slice_cols(v, start, head_dim);
    const Tensor<T> weights = softmax(scale(matmul_nt(qh, kh), inv_sqrt), 1);
    if (attention_maps != nullptr) attention_maps->push_back(weights);
    heads.push_back(matmul(weights, vh));
  }
  const Tensor<T> attended =
      num_heads == 1 ? heads.front() : concat_cols(std::span<const Tensor<T>>(heads));
  const Tensor<T> x1 = add(tokens, linear(attended, w.w_o, w.b_o));

  const Tensor<T> h2 = layer_norm(x1, w.norm2_w, w.norm2_b);
  const Tensor<T> mlp = linear(gelu(linear(h2, w.fc1_w, w.fc1_b)), w.fc2_w, w.fc2_b);
  return add(x1, mlp);
}

template <typename T>
Tensor<T> forward(const ViTModel<T>& model, const FloatImage<T>& img) {
  const ViTConfig& c = model.config();
  if (img.height != c.image_size || img.width != c.image_size) {
    throw DimensionError("forward: image is " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + ", model expects " +
                         std::to_string(c.image_size) + "x" + std::to_string(c.image_size));
  }
  const auto& r = model.registry();
  const Tensor<T> patches =
      patch_embed(img, r.get("patch_embed.weight"), r.get("patch_embed.bias"), c.patch_size);
  Tensor<T> x = add(concat_rows(r.get("cls_token"), patches), r.get("pos_embed"));
  for (std::size_t i = 0; i < c.depth; ++i) {
    x = attention_block(x, BlockWeights<T>::from_model(model, i), c.num_heads);
  }
  const Tensor<T> normed = layer_norm(x, r.get("norm.weight"), r.get("norm.bias"));
  return linear(select_row(normed, 0), r.get("head.weight"), r.get("head.bias"));
}

template <typename T>
std::size_t count_params(const ViTModel<T>& model, bool trainable_only) {
  return model.registry().count(trainable_only);
}

template class ParameterRegistry<float>;
template class ParameterRegistry<double>;
template class ViTModel<float>;
template class ViTModel<double>;

#define CVIT_INSTANTIATE_VIT(T)                                                          \
  template struct BlockWeights<T>;                                                       \
  template Tensor<T> extract_patches(const FloatImage<T>&, std::size_t);                 \
  template Tensor<T> patch_embed(const FloatImage<T>&, const Tensor<T>&, const Tensor<T>&, \
                                 std::size_t);                                           \
  template Tensor<T> attention_block(const Tensor<T>&, const BlockWeights<T>&,           \
                                     std::size_t, std::vector<Tensor<T>>*);              \
  template Tensor<T> forward(const ViTModel<T>&, const FloatImage<T>&);                  \
  template std::size_t count_params(const ViTModel<T>&, bool);

CVIT_INSTANTIATE_VIT(float)
CVIT_INSTANTIATE_VIT(double)

#undef CVIT_INSTANTIATE_VIT

}  // namespace cvit
