#pragma once

// JSON experiment configuration. Layout:
//   {
//     "vit":        {"image_size", "patch_size", "embed_dim", "depth",
//                    "num_heads", "mlp_dim", "num_classes"},
//     "lora":       {"rank", "alpha", "targets": ["q", "v"]},
//     "train":      {"lr", "epochs", "max_steps", "batch_size", "seed", "precision"},
//     "preprocess": {"target_size", "interpolation", "mean", "std"},
//     "data":       {"classes", "train_limit", "test_limit"}
//   }
// Every section and field is optional and falls back to its default; unknown
// keys at any level are rejected with ParameterError.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "cvit/data.hpp"
#include "cvit/lora_config.hpp"
#include "cvit/trainer.hpp"
#include "cvit/vit.hpp"

namespace cvit {

struct DataSelection {
  std::vector<std::uint8_t> classes;  // empty = all ten
  std::size_t train_limit = 0;        // 0 = everything
  std::size_t test_limit = 0;
};

struct ExperimentConfig {
  ViTConfig vit;
  LoraConfig lora;
  TrainConfig train;
  PreprocessSpec preprocess;  // key and block size are filled in at run time
  DataSelection data;

  // Cross-section checks: target_size must equal the model's image_size.
  void validate() const;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

nlohmann::json to_json(const ViTConfig& cfg);
ViTConfig parse_vit_config(const nlohmann::json& doc);
nlohmann::json to_json(const LoraConfig& cfg);
LoraConfig parse_lora_config(const nlohmann::json& doc);

nlohmann::json to_json(const RunReport& report);

}  // namespace cvit
