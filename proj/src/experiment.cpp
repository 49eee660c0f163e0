#include "cvit/experiment.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cvit/checkpoint.hpp"
#include "cvit/errors.hpp"
#include "cvit/lora.hpp"

namespace cvit {
namespace {

constexpr const char* kExperimentFile = "experiment.json";

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct SelectedData {
  std::vector<Cifar10Record> train;
  std::vector<Cifar10Record> test;
};

SelectedData select(const std::filesystem::path& dir, const DataSelection& sel) {
  const CifarSplits splits = load_cifar10_dir(dir);
  SelectedData out{select_classes(splits.train, sel.classes, sel.train_limit),
                   select_classes(splits.test, sel.classes, sel.test_limit)};
  if (out.train.empty()) throw ParameterError("no training records left after class selection");
  if (out.test.empty()) throw ParameterError("no test records left after class selection");
  return out;
}

PreprocessSpec with_key(PreprocessSpec spec, const ViTConfig& vit,
                        const std::optional<EncryptionKey>& key) {
  spec.key = key;
  spec.block_size = vit.patch_size;
  return spec;
}

template <typename T>
TrainOutcome train_typed(const TrainRequest& req) {
  const ExperimentConfig& cfg = req.config;
  const SelectedData data = select(req.data_dir, cfg.data);
  const auto prepared = prepare<T>(data.train, data.test, with_key(cfg.preprocess, cfg.vit, req.key));

  ViTModel<T> model(cfg.vit, cfg.train.seed);
  if (req.mode != TuningMode::kFull) inject(model, cfg.lora, cfg.train.seed + 1);
  const TuningPolicy policy = apply_policy(model, req.mode);

  RunReport report = train(model, policy, prepared.train, cfg.train);
  report.accuracy = evaluate(model, prepared.test);
  report.encrypted = req.key.has_value();
  if (req.key) report.key_fingerprint = key_fingerprint(*req.key);

  TrainOutcome outcome;
  outcome.report = report;
  outcome.checkpoint_dir = req.out_dir / "checkpoint";
  save_model(outcome.checkpoint_dir, model);
  {
    std::ofstream out(outcome.checkpoint_dir / kExperimentFile);
    out << to_json(cfg).dump(2) << '\n';
  }
  nlohmann::json doc = to_json(report);
  doc["created_at"] = utc_timestamp();
  outcome.report_path = req.out_dir / "report.json";
  {
    std::ofstream out(outcome.report_path);
    if (!out) throw IoError("cannot write " + outcome.report_path.string());
    out << doc.dump(2) << '\n';
  }
  append_runs_csv(req.runs_csv.empty() ? req.out_dir / "runs.csv" : req.runs_csv, report);
  return outcome;
}

template <typename T>
double eval_typed(const EvalRequest& req) {
  ViTModel<T> model = load_model<T>(req.checkpoint_dir);
  ExperimentConfig cfg;
  const auto experiment_path = req.checkpoint_dir / kExperimentFile;
  if (std::filesystem::exists(experiment_path)) {
    cfg = load_config(experiment_path);
  } else {
    cfg.vit = model.config();
    cfg.preprocess.target_size = model.config().image_size;
  }
  if (cfg.vit != model.config()) {
    throw FormatError(req.checkpoint_dir.string() + ": experiment.json disagrees with config.json");
  }
  const SelectedData data = select(req.data_dir, cfg.data);
  const Dataset<T> test = prepare<T>(data.test, with_key(cfg.preprocess, cfg.vit, req.key));
  return evaluate(model, test);
}

}  // namespace

TrainOutcome run_train(const TrainRequest& request) {
  request.config.validate();
  std::filesystem::create_directories(request.out_dir);
  return request.config.train.precision == Precision::kF64 ? train_typed<double>(request)
                                                           : train_typed<float>(request);
}

double run_eval(const EvalRequest& request) {
  const auto manifest = read_manifest(request.checkpoint_dir);
  const bool f64 = !manifest.empty() && manifest.front().dtype == DType::kF64;
  return f64 ? eval_typed<double>(request) : eval_typed<float>(request);
}

ParamCounts count_parameters(const ViTConfig& vit, const LoraConfig& lora, TuningMode mode) {
  ViTModel<float> model(vit, 0, ViTModel<float>::Init::kZeros);
  if (mode != TuningMode::kFull) inject(model, lora, 0);
  apply_policy(model, mode);
  ParamCounts counts;
  for (const auto& [name, tensor] : model.registry().entries()) {
    if (name.rfind("patch_embed.", 0) == 0) counts.patch_embed += tensor.numel();
    if (name.rfind("head.", 0) == 0) counts.head += tensor.numel();
    if (name.rfind(kLoraPrefix, 0) == 0) counts.adapters += tensor.numel();
  }
  counts.trainable = count_params(model, true);
  counts.total = count_params(model, false);
  counts.closed_form = closed_form_params(vit);
  counts.closed_form_adapters =
      mode == TuningMode::kFull ? 0 : closed_form_adapter_params(vit, lora);
  return counts;
}

std::size_t closed_form_trainable(const ViTConfig& vit, const LoraConfig& lora, TuningMode mode) {
  const ParamBreakdown p = closed_form_params(vit);
  switch (mode) {
    case TuningMode::kFull:
      return p.total;
    case TuningMode::kMeLo:
      return closed_form_adapter_params(vit, lora) + p.head;
    case TuningMode::kOurs:
      return closed_form_adapter_params(vit, lora) + p.head + p.patch_embed;
  }
  return 0;
}

}  // namespace cvit
