#pragma once

// Checkpoint directory layout:
//   manifest.json  {"format": "cvit-checkpoint", "version": 1, "tensors": [
//                    {"name", "dtype": "f32"|"f64", "shape", "offset", "length"}, ...]}
//   weights.bin    little-endian raw arrays concatenated in manifest order;
//                  offset and length are in bytes
//   config.json    model and adapter hyperparameters (model checkpoints only)

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cvit/tensor.hpp"
#include "cvit/vit.hpp"

namespace cvit {

enum class DType { kF32, kF64 };

std::string to_string(DType dtype);
DType parse_dtype(const std::string& text);
std::size_t dtype_size(DType dtype);

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::kF32 : DType::kF64;
}

struct ManifestEntry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

using NameFilter = std::function<bool(const std::string&)>;

// Writes every registry entry accepted by `keep` (all when empty).
template <typename T>
void save_tensors(const std::filesystem::path& dir,
                  const std::vector<std::pair<std::string, Tensor<T>>>& entries,
                  const NameFilter& keep = {});

// Loads all tensors, converting stored precision to T.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> load_tensors(const std::filesystem::path& dir);

// Model checkpoint: config.json plus tensors. With adapters_only, only lora.*
// tensors are written.
template <typename T>
void save_model(const std::filesystem::path& dir, const ViTModel<T>& model,
                bool adapters_only = false);

// Rebuilds the model described by config.json and fills it from the stored
// tensors. Every registry entry must be present in the checkpoint.
template <typename T>
ViTModel<T> load_model(const std::filesystem::path& dir);

// Overwrites the registry entries named in the checkpoint (for example an
// adapters-only checkpoint on top of a base model). Returns how many.
template <typename T>
std::size_t load_into(ViTModel<T>& model, const std::filesystem::path& dir);

}  // namespace cvit
