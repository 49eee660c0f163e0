#include "cvit/lora.hpp"

#include <algorithm>

#include "cvit/autodiff.hpp"
#include "cvit/errors.hpp"
#include "cvit/kernels.hpp"
#include "cvit/ops.hpp"
#include "cvit/random.hpp"

namespace cvit {

std::string to_string(LoraTarget target) {
  return target == LoraTarget::kQuery ? "q" : "v";
}

LoraTarget parse_lora_target(const std::string& text) {
  if (text == "q" || text == "Q") return LoraTarget::kQuery;
  if (text == "v" || text == "V") return LoraTarget::kValue;
  throw ParameterError("unknown adapter target '" + text + "' (expected q or v)");
}

bool LoraConfig::targets_contain(LoraTarget t) const {
  return std::find(targets.begin(), targets.end(), t) != targets.end();
}

void LoraConfig::validate(std::size_t embed_dim) const {
  if (rank == 0 || rank >= embed_dim) {
    throw ParameterError("adapter rank " + std::to_string(rank) + " must satisfy 0 < r < d = " +
                         std::to_string(embed_dim));
  }
  if (!(alpha > 0.0)) throw ParameterError("adapter alpha must be positive");
  if (targets.empty()) throw ParameterError("adapter target list is empty");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (std::find(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(i), targets[i]) !=
        targets.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw ParameterError("adapter target '" + to_string(targets[i]) + "' listed twice");
    }
  }
}

std::string projection_name(std::size_t block, LoraTarget target) {
  return block_prefix(block) + "attn.w_" + to_string(target);
}

std::string adapter_a_name(const std::string& owner) { return kLoraPrefix + owner + ".a"; }
std::string adapter_b_name(const std::string& owner) { return kLoraPrefix + owner + ".b"; }

template <typename T>
void inject(ViTModel<T>& model, const LoraConfig& cfg, std::uint64_t seed) {
  if (model.lora().has_value()) throw StateError("model already has adapters injected");
  const ViTConfig& c = model.config();
  cfg.validate(c.embed_dim);
  Rng rng(seed);
  auto& registry = model.registry();
  for (std::size_t block = 0; block < c.depth; ++block) {
    // Fixed Q-then-V order keeps names and the RNG stream stable regardless
    // of how targets were listed.
    for (LoraTarget target : {LoraTarget::kQuery, LoraTarget::kValue}) {
      if (!cfg.targets_contain(target)) continue;
      const std::string owner = projection_name(block, target);
      Tensor<T> a(Shape{cfg.rank, c.embed_dim});
      for (T& x : a.mutable_data()) x = static_cast<T>(kLoraInitStd * rng.normal());
      registry.add(adapter_a_name(owner), std::move(a));
      registry.add(adapter_b_name(owner), Tensor<T>(Shape{c.embed_dim, cfg.rank}));
    }
  }
  model.set_lora(cfg);
}

template <typename T>
std::vector<LoraAdapter<T>> adapters(const ViTModel<T>& model) {
  std::vector<LoraAdapter<T>> out;
  if (!model.lora()) return out;
  const auto& r = model.registry();
  for (std::size_t block = 0; block < model.config().depth; ++block) {
    for (LoraTarget target : {LoraTarget::kQuery, LoraTarget::kValue}) {
      const std::string owner = projection_name(block, target);
      if (!r.contains(adapter_a_name(owner))) continue;
      out.push_back({owner, r.get(adapter_a_name(owner)), r.get(adapter_b_name(owner))});
    }
  }
  return out;
}

template <typename T>
Tensor<T> lora_project(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                       const Tensor<T>& a, const Tensor<T>& b, T scaling) {
  if (a.rank() != 2 || b.rank() != 2 || weight.rank() != 2 || a.dim(0) != b.dim(1) ||
      a.dim(1) != weight.dim(1) || b.dim(0) != weight.dim(0)) {
    throw DimensionError("lora: adapter A " + shape_string(a.shape()) + " / B " +
                         shape_string(b.shape()) + " inconsistent with weight " +
                         shape_string(weight.shape()));
  }
  const Tensor<T> base = linear(x, weight, bias);
  const Tensor<T> update = scale(matmul_nt(matmul_nt(x, a), b), scaling);
  return add(base, update);
}

template <typename T>
Tensor<T> lora_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                       const LoraAdapter<T>& adapter, double alpha, std::size_t rank) {
  if (adapter.a.dim(0) != rank || adapter.b.dim(1) != rank) {
    throw DimensionError("lora: adapter rank " + std::to_string(adapter.a.dim(0)) +
                         " does not match configured rank " + std::to_string(rank));
  }
  return lora_project(x, weight, bias, adapter.a, adapter.b,
                      static_cast<T>(alpha / static_cast<double>(rank)));
}

template <typename T>
Tensor<T> merge(const Tensor<T>& weight, const LoraAdapter<T>& adapter, double alpha,
                std::size_t rank) {
  const std::size_t d_out = weight.dim(0);
  const std::size_t d_in = weight.dim(1);
  if (adapter.a.dim(0) != rank || adapter.b.dim(1) != rank || adapter.a.dim(1) != d_in ||
      adapter.b.dim(0) != d_out) {
    throw DimensionError("merge: adapter " + shape_string(adapter.a.shape()) + "/" +
                         shape_string(adapter.b.shape()) + " does not fit weight " +
                         shape_string(weight.shape()) + " at rank " + std::to_string(rank));
  }
  std::vector<T> product(d_out * d_in, T{0});
  kernels::gemm_nn<T>(adapter.b.data(), adapter.a.data(), product, d_out, rank, d_in);
  const T s = static_cast<T>(alpha / static_cast<double>(rank));
  Tensor<T> out = weight.clone();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += s * product[i];
  return out;
}

template <typename T>
ViTModel<T> merge_adapters(const ViTModel<T>& model) {
  ViTModel<T> merged = model.clone();
  if (!model.lora()) return merged;
  const LoraConfig& cfg = *model.lora();
  for (const auto& adapter : adapters(model)) {
    Tensor<T> folded = merge(model.param(adapter.owner), adapter, cfg.alpha, cfg.rank);
    auto dst = merged.param(adapter.owner).mutable_data();
    std::copy(folded.data().begin(), folded.data().end(), dst.begin());
  }
  merged.registry().remove_prefix(kLoraPrefix);
  merged.clear_lora();
  return merged;
}

#define CVIT_INSTANTIATE_LORA(T)                                                         \
  template void inject(ViTModel<T>&, const LoraConfig&, std::uint64_t);                  \
  template std::vector<LoraAdapter<T>> adapters(const ViTModel<T>&);                     \
  template Tensor<T> lora_project(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                  const Tensor<T>&, const Tensor<T>&, T);                \
  template Tensor<T> lora_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                  const LoraAdapter<T>&, double, std::size_t);           \
  template Tensor<T> merge(const Tensor<T>&, const LoraAdapter<T>&, double, std::size_t); \
  template ViTModel<T> merge_adapters(const ViTModel<T>&);

CVIT_INSTANTIATE_LORA(float)
CVIT_INSTANTIATE_LORA(double)

#undef CVIT_INSTANTIATE_LORA

}  // namespace cvit
