#include "cvit/trainer.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cvit/adam.hpp"
#include "cvit/autodiff.hpp"
#include "cvit/errors.hpp"
#include "cvit/lora.hpp"
#include "cvit/ops.hpp"
#include "cvit/random.hpp"

namespace cvit {

std::string to_string(TuningMode mode) {
  switch (mode) {
    case TuningMode::kFull:
      return "full";
    case TuningMode::kMeLo:
      return "melo";
    case TuningMode::kOurs:
      return "ours";
  }
  return "unknown";
}

TuningMode parse_tuning_mode(const std::string& text) {
  if (text == "full") return TuningMode::kFull;
  if (text == "melo") return TuningMode::kMeLo;
  if (text == "ours") return TuningMode::kOurs;
  throw ParameterError("unknown tuning mode '" + text + "' (expected full, melo or ours)");
}

bool TuningPolicy::matches(const std::string& name) const {
  for (const auto& pattern : patterns) {
    if (pattern == "*") return true;
    if (pattern.size() >= 2 && pattern.ends_with(".*")) {
      const std::string_view prefix(pattern.data(), pattern.size() - 1);
      if (std::string_view(name).starts_with(prefix)) return true;
    } else if (name == pattern) {
      return true;
    }
  }
  return false;
}

TuningPolicy resolve_policy(TuningMode mode) {
  switch (mode) {
    case TuningMode::kFull:
      return {mode, {"*"}};
    case TuningMode::kMeLo:
      return {mode, {"lora.*", "head.*"}};
    case TuningMode::kOurs:
      return {mode, {"lora.*", "head.*", "patch_embed.*"}};
  }
  throw ParameterError("unknown tuning mode");
}

template <typename T>
TuningPolicy apply_policy(ViTModel<T>& model, TuningMode mode) {
  if (mode != TuningMode::kFull && !model.lora()) {
    throw StateError("mode '" + to_string(mode) + "' requires injected adapters");
  }
  TuningPolicy policy = resolve_policy(mode);
  for (const auto& entry : model.registry().entries()) {
    Tensor<T> handle = entry.second;
    handle.set_requires_grad(policy.matches(entry.first));
  }
  return policy;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> trainable_params(const ViTModel<T>& model) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto& entry : model.registry().entries()) {
    if (entry.second.requires_grad()) out.push_back(entry);
  }
  return out;
}

std::string to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& text) {
  if (text == "f32") return Precision::kF32;
  if (text == "f64") return Precision::kF64;
  throw ParameterError("unknown precision '" + text + "' (expected f32 or f64)");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ParameterError("lr must be finite and >= 0");
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
}

template <typename T>
RunReport train(ViTModel<T>& model, const TuningPolicy& policy, const Dataset<T>& data,
                const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw ParameterError("training set is empty");

  RunReport report;
  report.mode = policy.mode;
  report.seed = cfg.seed;
  report.trainable_params = count_params(model, true);
  report.total_params = count_params(model, false);

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  Adam<T> optimizer(trainable_params(model), adam_cfg);
  report.optimizer_state_elements = optimizer.state_elements();
  if (optimizer.params().empty()) throw StateError("no trainable parameters under the policy");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffler(cfg.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  const std::size_t steps_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;

  std::size_t step = 0;
  std::size_t over_limit = 0;
  clear_tape<T>();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
    shuffler.shuffle(std::span<std::size_t>(order));
    double epoch_total = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      Tensor<T> total;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& example = data[order[i]];
        Tensor<T> loss = cross_entropy(forward(model, example.image), example.label);
        total = total.defined() ? add(total, loss) : loss;
      }
      Tensor<T> loss = scale(total, T{1} / static_cast<T>(end - begin));
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        clear_tape<T>();
        throw DivergenceError("non-finite loss at step " + std::to_string(step + 1));
      }
      if (step == 0) report.initial_loss = value;
      over_limit = value > kDivergenceFactor * report.initial_loss ? over_limit + 1 : 0;
      if (over_limit >= kDivergencePatience) {
        clear_tape<T>();
        throw DivergenceError("loss above " + std::to_string(kDivergenceFactor) +
                              "x its initial value for " + std::to_string(kDivergencePatience) +
                              " consecutive steps, last at step " + std::to_string(step + 1));
      }
      backward(loss);
      optimizer.step();
      optimizer.zero_grad();
      ++step;
      report.step_losses.push_back(value);
      epoch_total += value;
      ++epoch_steps;
      if (on_step) on_step(step, value);
    }
    if (epoch_steps > 0) {
      report.epoch_losses.push_back(epoch_total / static_cast<double>(epoch_steps));
      ++report.epochs;
    }
  }
  report.steps = step;
  const std::size_t window = std::min(steps_per_epoch, report.step_losses.size());
  report.final_loss =
      std::accumulate(report.step_losses.end() - static_cast<std::ptrdiff_t>(window),
                      report.step_losses.end(), 0.0) /
      static_cast<double>(window);
  return report;
}

template <typename T>
std::size_t predict(const ViTModel<T>& model, const FloatImage<T>& img) {
  NoGradGuard guard;
  const Tensor<T> logits = forward(model, img);
  const auto values = logits.data();
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                  values.begin());
}

template <typename T>
double evaluate(const ViTModel<T>& model, const Dataset<T>& data) {
  if (data.empty()) throw ParameterError("evaluation set is empty");
  std::size_t correct = 0;
  for (const auto& example : data) {
    if (predict(model, example.image) == example.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string key_fingerprint(EncryptionKey key) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(key.seed >> (8 * i));
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes, sizeof bytes, digest);
  std::ostringstream os;
  for (int i = 0; i < 8; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string runs_csv_header() {
  return "mode,trainable_params,total_params,epochs,final_loss,accuracy,encrypted_flag,seed";
}

std::string runs_csv_row(const RunReport& r) {
  std::ostringstream os;
  os << to_string(r.mode) << ',' << r.trainable_params << ',' << r.total_params << ','
     << r.epochs << ',' << std::setprecision(9) << r.final_loss << ',' << r.accuracy << ','
     << (r.encrypted ? 1 : 0) << ',' << r.seed;
  return os.str();
}

void append_runs_csv(const std::filesystem::path& path, const RunReport& report) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  if (fresh) out << runs_csv_header() << '\n';
  out << runs_csv_row(report) << '\n';
}

#define CVIT_INSTANTIATE_TRAINER(T)                                                        \
  template TuningPolicy apply_policy(ViTModel<T>&, TuningMode);                            \
  template std::vector<std::pair<std::string, Tensor<T>>> trainable_params(                \
      const ViTModel<T>&);                                                                 \
  template RunReport train(ViTModel<T>&, const TuningPolicy&, const Dataset<T>&,           \
                           const TrainConfig&, const StepCallback&);                       \
  template double evaluate(const ViTModel<T>&, const Dataset<T>&);                         \
  template std::size_t predict(const ViTModel<T>&, const FloatImage<T>&);

CVIT_INSTANTIATE_TRAINER(float)
CVIT_INSTANTIATE_TRAINER(double)

#undef CVIT_INSTANTIATE_TRAINER

}  // namespace cvit
