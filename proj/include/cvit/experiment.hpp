#pragma once

// End-to-end runs shared by the command-line tool and the integration tests.

#include <cstddef>
#include <filesystem>
#include <optional>

#include "cvit/config.hpp"
#include "cvit/crypto.hpp"
#include "cvit/trainer.hpp"

namespace cvit {

// Published reference parameter counts, in millions, for the three tuning
// modes on ViT-B/16 with a 10-class head.
inline constexpr double kReferenceFullMillions = 82.56;
inline constexpr double kReferenceMeLoMillions = 0.15;
inline constexpr double kReferenceOursMillions = 0.71;

struct TrainRequest {
  ExperimentConfig config;
  TuningMode mode = TuningMode::kOurs;
  std::filesystem::path data_dir;
  std::optional<EncryptionKey> key;
  std::filesystem::path out_dir = "run";
  std::filesystem::path runs_csv;  // defaults to <out_dir>/runs.csv
};

struct TrainOutcome {
  RunReport report;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path report_path;
};

// Loads the data, prepares both splits with one key, builds and adapts the
// model, trains, evaluates on the test split and writes the checkpoint,
// report.json (with a created_at timestamp) and a runs.csv row.
TrainOutcome run_train(const TrainRequest& request);

struct EvalRequest {
  std::filesystem::path checkpoint_dir;
  std::filesystem::path data_dir;
  std::optional<EncryptionKey> key;
};

// Test-split accuracy of a saved checkpoint. Preprocessing and class
// selection come from the experiment.json stored beside the weights.
double run_eval(const EvalRequest& request);

struct ParamCounts {
  std::size_t patch_embed = 0;
  std::size_t head = 0;
  std::size_t adapters = 0;
  std::size_t trainable = 0;
  std::size_t total = 0;
  ParamBreakdown closed_form;
  std::size_t closed_form_adapters = 0;
};

// Counts by enumerating a live zero-initialised registry; adapters are
// injected for MeLo and Ours.
ParamCounts count_parameters(const ViTConfig& vit, const LoraConfig& lora, TuningMode mode);

// Closed-form trainable count for a mode (adapters + head [+ patch embedding]).
std::size_t closed_form_trainable(const ViTConfig& vit, const LoraConfig& lora, TuningMode mode);

}  // namespace cvit
