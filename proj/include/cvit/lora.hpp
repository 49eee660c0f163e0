#pragma once

// Low-rank adapters on the query and value projections.
//
// For a projection y = x·Wᵀ + b the adapted output is
//   y' = x·Wᵀ + b + (α/r)·(x·Aᵀ)·Bᵀ
// with A [r×d] and B [d×r]. B starts at zero, so an injected model computes
// exactly what the base model computes until B is trained. Adapter tensors
// live in the registry as "lora.<owner>.a" and "lora.<owner>.b".

#include <cstdint>
#include <string>
#include <vector>

#include "cvit/lora_config.hpp"
#include "cvit/tensor.hpp"
#include "cvit/vit.hpp"

namespace cvit {

inline constexpr const char* kLoraPrefix = "lora.";
inline constexpr double kLoraInitStd = 0.02;

template <typename T>
struct LoraAdapter {
  std::string owner;  // e.g. blocks.3.attn.w_q
  Tensor<T> a;        // [r × d]
  Tensor<T> b;        // [d × r]
};

std::string projection_name(std::size_t block, LoraTarget target);
std::string adapter_a_name(const std::string& owner);
std::string adapter_b_name(const std::string& owner);

// Adds one adapter per target projection per block. A ~ N(0, 0.02²), B = 0.
// Throws StateError if the model already has adapters.
template <typename T>
void inject(ViTModel<T>& model, const LoraConfig& cfg, std::uint64_t seed);

template <typename T>
std::vector<LoraAdapter<T>> adapters(const ViTModel<T>& model);

// x·Wᵀ + bias + (α/r)·(x·Aᵀ)·Bᵀ; bias may be undefined.
template <typename T>
Tensor<T> lora_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                       const LoraAdapter<T>& adapter, double alpha, std::size_t rank);

// Same, with the α/r factor already folded into `scaling`.
template <typename T>
Tensor<T> lora_project(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                       const Tensor<T>& a, const Tensor<T>& b, T scaling);

// W + (α/r)·B·A, outside the tape.
template <typename T>
Tensor<T> merge(const Tensor<T>& weight, const LoraAdapter<T>& adapter, double alpha,
                std::size_t rank);

// Copy of `model` with every adapter folded into its projection and the
// lora.* entries removed.
template <typename T>
ViTModel<T> merge_adapters(const ViTModel<T>& model);

}  // namespace cvit
