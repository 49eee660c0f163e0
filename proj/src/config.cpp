#include "cvit/config.hpp"

#include <fstream>
#include <set>

#include "cvit/errors.hpp"

namespace cvit {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw ParameterError("config: '" + where + "' must be an object");
  for (const auto& item : obj.items()) {
    if (allowed.count(item.key()) == 0) {
      throw ParameterError("config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename V>
void read(const json& obj, const char* key, V& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ParameterError("config: bad value for " + where + "." + key + ": " + e.what());
  }
}

void read_size(const json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ParameterError("config: " + where + "." + key + " must be a non-negative integer");
  }
  out = v.get<std::size_t>();
}

}  // namespace

ViTConfig parse_vit_config(const json& doc) {
  reject_unknown(doc,
                 {"image_size", "patch_size", "embed_dim", "depth", "num_heads", "mlp_dim",
                  "num_classes"},
                 "vit");
  ViTConfig c;
  read_size(doc, "image_size", c.image_size, "vit");
  read_size(doc, "patch_size", c.patch_size, "vit");
  read_size(doc, "embed_dim", c.embed_dim, "vit");
  read_size(doc, "depth", c.depth, "vit");
  read_size(doc, "num_heads", c.num_heads, "vit");
  read_size(doc, "mlp_dim", c.mlp_dim, "vit");
  read_size(doc, "num_classes", c.num_classes, "vit");
  c.validate();
  return c;
}

json to_json(const ViTConfig& c) {
  return json{{"image_size", c.image_size}, {"patch_size", c.patch_size},
              {"embed_dim", c.embed_dim},   {"depth", c.depth},
              {"num_heads", c.num_heads},   {"mlp_dim", c.mlp_dim},
              {"num_classes", c.num_classes}};
}

LoraConfig parse_lora_config(const json& doc) {
  reject_unknown(doc, {"rank", "alpha", "targets"}, "lora");
  LoraConfig c;
  read_size(doc, "rank", c.rank, "lora");
  read(doc, "alpha", c.alpha, "lora");
  if (doc.contains("targets")) {
    std::vector<std::string> names;
    read(doc, "targets", names, "lora");
    c.targets.clear();
    for (const auto& n : names) c.targets.push_back(parse_lora_target(n));
  }
  return c;
}

json to_json(const LoraConfig& c) {
  json targets = json::array();
  for (LoraTarget t : c.targets) targets.push_back(to_string(t));
  return json{{"rank", c.rank}, {"alpha", c.alpha}, {"targets", targets}};
}

namespace {

TrainConfig parse_train(const json& doc) {
  reject_unknown(doc, {"lr", "epochs", "max_steps", "batch_size", "seed", "precision"}, "train");
  TrainConfig c;
  read(doc, "lr", c.lr, "train");
  read_size(doc, "epochs", c.epochs, "train");
  read_size(doc, "max_steps", c.max_steps, "train");
  read_size(doc, "batch_size", c.batch_size, "train");
  read(doc, "seed", c.seed, "train");
  if (doc.contains("precision")) {
    std::string p;
    read(doc, "precision", p, "train");
    c.precision = parse_precision(p);
  }
  c.validate();
  return c;
}

PreprocessSpec parse_preprocess(const json& doc, std::size_t default_target) {
  reject_unknown(doc, {"target_size", "interpolation", "mean", "std"}, "preprocess");
  PreprocessSpec s;
  s.target_size = default_target;
  read_size(doc, "target_size", s.target_size, "preprocess");
  if (doc.contains("interpolation")) {
    std::string mode;
    read(doc, "interpolation", mode, "preprocess");
    if (mode == "bilinear") {
      s.interpolation = Interpolation::kBilinear;
    } else if (mode == "nearest") {
      s.interpolation = Interpolation::kNearest;
    } else {
      throw ParameterError("config: preprocess.interpolation must be bilinear or nearest");
    }
  }
  read(doc, "mean", s.mean, "preprocess");
  read(doc, "std", s.std, "preprocess");
  return s;
}

DataSelection parse_data(const json& doc) {
  reject_unknown(doc, {"classes", "train_limit", "test_limit"}, "data");
  DataSelection d;
  if (doc.contains("classes")) {
    std::vector<int> classes;
    read(doc, "classes", classes, "data");
    for (int c : classes) {
      if (c < 0 || c > 9) throw ParameterError("config: data.classes entries must be in [0, 9]");
      d.classes.push_back(static_cast<std::uint8_t>(c));
    }
  }
  read_size(doc, "train_limit", d.train_limit, "data");
  read_size(doc, "test_limit", d.test_limit, "data");
  return d;
}

}  // namespace

void ExperimentConfig::validate() const {
  vit.validate();
  lora.validate(vit.embed_dim);
  train.validate();
  if (preprocess.target_size != vit.image_size) {
    throw ParameterError("config: preprocess.target_size " +
                         std::to_string(preprocess.target_size) +
                         " differs from vit.image_size " + std::to_string(vit.image_size));
  }
  if (!data.classes.empty() && data.classes.size() != vit.num_classes) {
    throw ParameterError("config: data.classes lists " + std::to_string(data.classes.size()) +
                         " classes but vit.num_classes is " + std::to_string(vit.num_classes));
  }
}

ExperimentConfig parse_config(const json& doc) {
  reject_unknown(doc, {"vit", "lora", "train", "preprocess", "data"}, "config");
  ExperimentConfig cfg;
  if (doc.contains("vit")) cfg.vit = parse_vit_config(doc.at("vit"));
  if (doc.contains("lora")) cfg.lora = parse_lora_config(doc.at("lora"));
  if (doc.contains("train")) cfg.train = parse_train(doc.at("train"));
  if (doc.contains("preprocess")) {
    cfg.preprocess = parse_preprocess(doc.at("preprocess"), cfg.vit.image_size);
  } else {
    cfg.preprocess.target_size = cfg.vit.image_size;
  }
  if (doc.contains("data")) cfg.data = parse_data(doc.at("data"));
  cfg.preprocess.block_size = cfg.vit.patch_size;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
  json classes = json::array();
  for (auto c : cfg.data.classes) classes.push_back(static_cast<int>(c));
  return json{
      {"vit", to_json(cfg.vit)},
      {"lora", to_json(cfg.lora)},
      {"train",
       {{"lr", cfg.train.lr},
        {"epochs", cfg.train.epochs},
        {"max_steps", cfg.train.max_steps},
        {"batch_size", cfg.train.batch_size},
        {"seed", cfg.train.seed},
        {"precision", to_string(cfg.train.precision)}}},
      {"preprocess",
       {{"target_size", cfg.preprocess.target_size},
        {"interpolation",
         cfg.preprocess.interpolation == Interpolation::kBilinear ? "bilinear" : "nearest"},
        {"mean", cfg.preprocess.mean},
        {"std", cfg.preprocess.std}}},
      {"data",
       {{"classes", classes},
        {"train_limit", cfg.data.train_limit},
        {"test_limit", cfg.data.test_limit}}},
  };
}

json to_json(const RunReport& r) {
  return json{
      {"mode", to_string(r.mode)},
      {"step_losses", r.step_losses},
      {"epoch_losses", r.epoch_losses},
      {"initial_loss", r.initial_loss},
      {"final_loss", r.final_loss},
      {"accuracy", r.accuracy},
      {"trainable_params", r.trainable_params},
      {"total_params", r.total_params},
      {"optimizer_state_elements", r.optimizer_state_elements},
      {"epochs", r.epochs},
      {"steps", r.steps},
      {"encrypted", r.encrypted},
      {"seed", r.seed},
      {"key_fingerprint", r.key_fingerprint},
  };
}

}  // namespace cvit
