#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cvit/data.hpp"
#include "cvit/vit.hpp"

namespace cvit {

enum class TuningMode { kFull, kMeLo, kOurs };

std::string to_string(TuningMode mode);
TuningMode parse_tuning_mode(const std::string& text);

/// Trainable-name patterns for a mode. A pattern ending in ".*" matches that
/// prefix; "*" matches everything.
///   Full → *
///   MeLo → lora.*, head.*
///   Ours → lora.*, head.*, patch_embed.*
/// The head is trainable everywhere since a new task needs a new classifier.
struct TuningPolicy {
  TuningMode mode = TuningMode::kFull;
  std::vector<std::string> patterns;

  bool matches(const std::string& name) const;
};

TuningPolicy resolve_policy(TuningMode mode);

// Sets requires_grad on every registry entry per the policy. Throws
// StateError for MeLo/Ours on a model without adapters.
template <typename T>
TuningPolicy apply_policy(ViTModel<T>& model, TuningMode mode);

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> trainable_params(const ViTModel<T>& model);

enum class Precision { kF32, kF64 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& text);

struct TrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 5;
  std::size_t max_steps = 0;  // 0 = run all epochs
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Precision precision = Precision::kF32;

  void validate() const;
};

struct RunReport {
  TuningMode mode = TuningMode::kFull;
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;  // mean batch loss per (possibly partial) epoch
  double initial_loss = 0.0;         // loss of the first batch, before any update
  double final_loss = 0.0;           // mean over the last epoch's worth of steps
  double accuracy = 0.0;
  std::size_t trainable_params = 0;
  std::size_t total_params = 0;
  std::size_t optimizer_state_elements = 0;
  std::size_t epochs = 0;
  std::size_t steps = 0;
  bool encrypted = false;
  std::uint64_t seed = 0;
  std::string key_fingerprint;  // empty when unencrypted
};

// Loss above this multiple of the initial loss for kDivergencePatience
// consecutive steps aborts training.
inline constexpr double kDivergenceFactor = 10.0;
inline constexpr std::size_t kDivergencePatience = 50;

// Per-step observer, called after each optimizer update.
using StepCallback = std::function<void(std::size_t step, double loss)>;

// Adam on cross-entropy over the policy's trainable tensors. Batches are
// reshuffled per epoch from cfg.seed; the last partial batch is kept.
template <typename T>
RunReport train(ViTModel<T>& model, const TuningPolicy& policy, const Dataset<T>& data,
                const TrainConfig& cfg, const StepCallback& on_step = {});

// Fraction of correct argmax predictions; ties resolve to the lower class.
template <typename T>
double evaluate(const ViTModel<T>& model, const Dataset<T>& data);

template <typename T>
std::size_t predict(const ViTModel<T>& model, const FloatImage<T>& img);

// Hex digest identifying a key without revealing it.
std::string key_fingerprint(EncryptionKey key);

std::string runs_csv_header();
std::string runs_csv_row(const RunReport& report);
// Appends a row, writing the header first when the file is new.
void append_runs_csv(const std::filesystem::path& path, const RunReport& report);

}  // namespace cvit
