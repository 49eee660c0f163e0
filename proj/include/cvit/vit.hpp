#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cvit/float_image.hpp"
#include "cvit/lora_config.hpp"
#include "cvit/tensor.hpp"

namespace cvit {

struct ViTConfig {
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t embed_dim = 768;
  std::size_t depth = 12;
  std::size_t num_heads = 12;
  std::size_t mlp_dim = 3072;
  std::size_t num_classes = 10;

  static ViTConfig vit_b16(std::size_t num_classes = 10);
  // d=16, L=2, h=2, P=4 on 16×16 images.
  static ViTConfig toy(std::size_t num_classes = 10);

  void validate() const;
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return 3 * patch_size * patch_size; }
  std::size_t head_dim() const { return embed_dim / num_heads; }

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

// Closed-form parameter counts.
struct ParamBreakdown {
  std::size_t patch_embed = 0;
  std::size_t cls_token = 0;
  std::size_t pos_embed = 0;
  std::size_t per_block = 0;
  std::size_t blocks = 0;
  std::size_t final_norm = 0;
  std::size_t head = 0;
  std::size_t total = 0;
};
ParamBreakdown closed_form_params(const ViTConfig& config);

// L · |targets| · 2·d·r
std::size_t closed_form_adapter_params(const ViTConfig& config, const LoraConfig& lora);

/// Insertion-ordered map from dotted parameter path to tensor.
template <typename T>
class ParameterRegistry {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void add(std::string name, Tensor<T> tensor);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T>& get(const std::string& name);
  const Tensor<T>& get(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t count(bool trainable_only) const;
  // Removes every entry whose name starts with `prefix`; returns how many.
  std::size_t remove_prefix(const std::string& prefix);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class ViTModel {
 public:
  enum class Init { kRandom, kZeros };

  // Random init: truncated normal (std 0.02, cut at 2 std) for patch/position
  // embeddings, class token and head; Xavier-uniform for attention and MLP
  // projections; zero biases; unit LayerNorm scales.
  ViTModel(const ViTConfig& config, std::uint64_t seed, Init init = Init::kRandom);

  ViTModel(ViTModel&&) noexcept = default;
  ViTModel& operator=(ViTModel&&) noexcept = default;
  ViTModel(const ViTModel&) = delete;
  ViTModel& operator=(const ViTModel&) = delete;

  // Deep copy, including adapters and requires_grad flags.
  ViTModel clone() const;

  const ViTConfig& config() const { return config_; }
  ParameterRegistry<T>& registry() { return registry_; }
  const ParameterRegistry<T>& registry() const { return registry_; }
  const Tensor<T>& param(const std::string& name) const { return registry_.get(name); }
  Tensor<T>& param(const std::string& name) { return registry_.get(name); }

  const std::optional<LoraConfig>& lora() const { return lora_; }
  void set_lora(LoraConfig cfg) { lora_ = std::move(cfg); }
  void clear_lora() { lora_.reset(); }

 private:
  ViTModel(ViTConfig config, ParameterRegistry<T> registry, std::optional<LoraConfig> lora)
      : config_(std::move(config)), registry_(std::move(registry)), lora_(std::move(lora)) {}

  ViTConfig config_;
  ParameterRegistry<T> registry_;
  std::optional<LoraConfig> lora_;
};

std::string block_prefix(std::size_t block);

// Flattens each P×P block to a 3P² row (order c·P² + y·P + x); rows are
// ordered row-major over the block grid.
template <typename T>
Tensor<T> extract_patches(const FloatImage<T>& img, std::size_t patch_size);

template <typename T>
Tensor<T> patch_embed(const FloatImage<T>& img, const Tensor<T>& weight, const Tensor<T>& bias,
                      std::size_t patch_size);

/// Weights of one encoder block. Adapter tensors are undefined when absent.
template <typename T>
struct BlockWeights {
  Tensor<T> norm1_w, norm1_b;
  Tensor<T> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  Tensor<T> norm2_w, norm2_b;
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
  Tensor<T> lora_q_a, lora_q_b, lora_v_a, lora_v_b;
  T lora_scale = 0;

  static BlockWeights from_model(const ViTModel<T>& model, std::size_t block);
};

// Pre-norm encoder block over a token matrix [tokens × d]. When
// `attention_maps` is non-null it receives one [tokens × tokens] softmax
// matrix per head.
template <typename T>
Tensor<T> attention_block(const Tensor<T>& tokens, const BlockWeights<T>& w,
                          std::size_t num_heads,
                          std::vector<Tensor<T>>* attention_maps = nullptr);

// Logits as a [1 × num_classes] tensor, read from the class token.
template <typename T>
Tensor<T> forward(const ViTModel<T>& model, const FloatImage<T>& img);

template <typename T>
std::size_t count_params(const ViTModel<T>& model, bool trainable_only);

extern template class ParameterRegistry<float>;
extern template class ParameterRegistry<double>;
extern template class ViTModel<float>;
extern template class ViTModel<double>;

}  // namespace cvit
