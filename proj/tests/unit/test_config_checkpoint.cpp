#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvit/checkpoint.hpp"
#include "cvit/config.hpp"
#include "cvit/errors.hpp"
#include "cvit/lora.hpp"
#include "support/oracles.hpp"

using namespace cvit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cvit_ckpt_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ViTModel<double> adapted_toy(std::uint64_t seed) {
  ViTModel<double> model(ViTConfig::toy(10), seed);
  LoraConfig lora;
  lora.rank = 2;
  inject(model, lora, seed + 1);
  Rng rng(seed + 2);
  for (const auto& a : adapters(model)) {
    Tensor<double> b = a.b;
    for (double& v : b.mutable_data()) v = rng.normal();
  }
  return model;
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const ExperimentConfig cfg = parse_config(json::object());
  EXPECT_EQ(cfg.vit.image_size, ViTConfig{}.image_size);
  EXPECT_EQ(cfg.preprocess.target_size, cfg.vit.image_size);
  EXPECT_EQ(cfg.preprocess.block_size, cfg.vit.patch_size);
  EXPECT_DOUBLE_EQ(cfg.train.lr, 1e-4);
  EXPECT_TRUE(cfg.data.classes.empty());
}

TEST(Config, ShippedConfigsParse) {
  const fs::path dir = fs::path(CVIT_TEST_DATA_DIR).parent_path().parent_path() / "configs";
  const ExperimentConfig base = load_config(dir / "vit_b16.json");
  EXPECT_EQ(base.vit.image_size, 224u);
  EXPECT_EQ(base.vit.patch_size, 16u);
  EXPECT_EQ(base.lora.rank, 8u);
  EXPECT_DOUBLE_EQ(base.lora.alpha, 4.0);
  EXPECT_DOUBLE_EQ(base.train.lr, 1e-4);
  const ExperimentConfig toy = load_config(dir / "toy.json");
  EXPECT_EQ(toy.vit.image_size, 16u);
  EXPECT_EQ(toy.train.precision, Precision::kF64);
  const ExperimentConfig trend = load_config(dir / "desk_trend.json");
  EXPECT_EQ(trend.data.classes, (std::vector<std::uint8_t>{0, 1}));
  EXPECT_EQ(trend.train.max_steps, 200u);
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_THROW(parse_config(json{{"model", json::object()}}), ParameterError);
  for (const char* section : {"vit", "lora", "train", "preprocess", "data"}) {
    json doc;
    doc[section] = json{{"bogus", 1}};
    try {
      parse_config(doc);
      FAIL() << section;
    } catch (const ParameterError& e) {
      EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos) << e.what();
    }
  }
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(parse_config(json{{"vit", {{"depth", -1}}}}), ParameterError);
  EXPECT_THROW(parse_config(json{{"train", {{"lr", "fast"}}}}), ParameterError);
  EXPECT_THROW(parse_config(json{{"train", {{"precision", "f16"}}}}), ParameterError);
  EXPECT_THROW(parse_config(json{{"preprocess", {{"interpolation", "cubic"}}}}), ParameterError);
  EXPECT_THROW(parse_config(json{{"data", {{"classes", {3, 12}}}}}), ParameterError);
  EXPECT_THROW(parse_config(json{{"lora", {{"targets", {"q", "q"}}}}}), ParameterError);
  EXPECT_THROW(parse_config(json{{"vit", {{"image_size", 30}}}}), GeometryError);
}

TEST(Config, CrossSectionChecks) {
  json doc{{"vit", {{"image_size", 16}, {"patch_size", 4}, {"embed_dim", 16}, {"depth", 1},
                    {"num_heads", 2}, {"mlp_dim", 32}, {"num_classes", 2}}}};
  EXPECT_NO_THROW(parse_config(doc));
  doc["preprocess"] = {{"target_size", 32}};
  EXPECT_THROW(parse_config(doc), ParameterError);
  doc.erase("preprocess");
  doc["data"] = {{"classes", {1, 2, 3}}};
  EXPECT_THROW(parse_config(doc), ParameterError);
}

TEST(Config, JsonRoundTrip) {
  json doc{{"vit", {{"image_size", 16}, {"patch_size", 4}, {"embed_dim", 16}, {"depth", 2},
                    {"num_heads", 2}, {"mlp_dim", 32}, {"num_classes", 3}}},
           {"lora", {{"rank", 3}, {"alpha", 6.0}, {"targets", {"v"}}}},
           {"train", {{"lr", 5e-4}, {"epochs", 3}, {"max_steps", 7}, {"batch_size", 4},
                      {"seed", 11}, {"precision", "f64"}}},
           {"preprocess", {{"interpolation", "nearest"}, {"mean", {0.1, 0.2, 0.3}},
                           {"std", {0.4, 0.5, 0.6}}}},
           {"data", {{"classes", {4, 5, 6}}, {"train_limit", 9}, {"test_limit", 8}}}};
  const ExperimentConfig cfg = parse_config(doc);
  const json out = to_json(cfg);
  EXPECT_EQ(to_json(parse_config(out)), out);
  EXPECT_EQ(out["preprocess"]["target_size"], 16);
  EXPECT_EQ(out["lora"]["targets"], json({"v"}));
}

TEST(Config, MissingAndMalformedFiles) {
  const fs::path dir = scratch_dir("cfg");
  EXPECT_THROW(load_config(dir / "absent.json"), IoError);
  std::ofstream(dir / "broken.json") << "{\"vit\": ";
  EXPECT_THROW(load_config(dir / "broken.json"), FormatError);
}

TEST(Checkpoint, SaveLoadIsExact) {
  const fs::path dir = scratch_dir("exact");
  const auto model = adapted_toy(3);
  save_model(dir / "a", model);
  const auto loaded = load_model<double>(dir / "a");
  EXPECT_EQ(oracle::fingerprints(loaded), oracle::fingerprints(model));
  ASSERT_TRUE(loaded.lora().has_value());
  EXPECT_EQ(loaded.lora()->rank, 2u);
  save_model(dir / "b", loaded);
  EXPECT_EQ(file_bytes(dir / "a" / "weights.bin"), file_bytes(dir / "b" / "weights.bin"));
  EXPECT_EQ(file_bytes(dir / "a" / "manifest.json"), file_bytes(dir / "b" / "manifest.json"));
}

TEST(Checkpoint, ManifestOffsetsTileTheWeights) {
  const fs::path dir = scratch_dir("manifest");
  const auto model = adapted_toy(4);
  save_model(dir, model);
  const auto manifest = read_manifest(dir);
  ASSERT_EQ(manifest.size(), model.registry().size());
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& e = manifest[i];
    const auto& [name, tensor] = model.registry().entries()[i];
    EXPECT_EQ(e.name, name);
    EXPECT_EQ(e.shape, tensor.shape());
    EXPECT_EQ(e.dtype, DType::kF64);
    EXPECT_EQ(e.offset, offset);
    EXPECT_EQ(e.length, tensor.numel() * 8);
    offset += e.length;
  }
  EXPECT_EQ(fs::file_size(dir / "weights.bin"), offset);
  // The first tensor's first value is stored little-endian at offset 0.
  const std::string bytes = file_bytes(dir / "weights.bin");
  double first = 0.0;
  std::memcpy(&first, bytes.data(), sizeof(double));
  EXPECT_EQ(first, model.registry().entries()[0].second.data()[0]);
}

TEST(Checkpoint, AdaptersOnlyOnTopOfBase) {
  const fs::path dir = scratch_dir("adapters");
  const auto model = adapted_toy(5);
  save_model(dir, model, true);
  for (const auto& e : read_manifest(dir)) EXPECT_EQ(e.name.rfind(kLoraPrefix, 0), 0u) << e.name;

  ViTModel<double> base(ViTConfig::toy(10), 5);
  LoraConfig lora;
  lora.rank = 2;
  inject(base, lora, 99);
  EXPECT_EQ(load_into(base, dir), adapters(model).size() * 2);
  EXPECT_EQ(oracle::fingerprints(base), oracle::fingerprints(model));
  // A full model cannot be rebuilt from adapters alone.
  EXPECT_THROW(load_model<double>(dir), FormatError);
}

TEST(Checkpoint, PrecisionConversion) {
  const fs::path dir = scratch_dir("dtype");
  const auto model = adapted_toy(6);
  save_model(dir, model);
  const auto as_float = load_tensors<float>(dir);
  ASSERT_EQ(as_float.size(), model.registry().size());
  for (std::size_t i = 0; i < as_float.size(); ++i) {
    const auto want = model.registry().entries()[i].second.data();
    const auto got = as_float[i].second.data();
    for (std::size_t k = 0; k < want.size(); ++k) EXPECT_EQ(got[k], static_cast<float>(want[k]));
  }
}

TEST(Checkpoint, ShapeMismatchAndCorruption) {
  const fs::path dir = scratch_dir("corrupt");
  const auto model = adapted_toy(7);
  save_model(dir, model);
  ViTModel<double> other(ViTConfig::toy(3), 1);
  EXPECT_THROW(load_into(other, dir), DimensionError);

  std::ofstream(dir / "manifest.json") << "{\"format\": \"something-else\", \"tensors\": []}";
  EXPECT_THROW(read_manifest(dir), FormatError);
  std::ofstream(dir / "manifest.json") << "not json";
  EXPECT_THROW(read_manifest(dir), FormatError);
  fs::remove(dir / "manifest.json");
  EXPECT_THROW(read_manifest(dir), IoError);
}

TEST(Checkpoint, TruncatedWeights) {
  const fs::path dir = scratch_dir("truncated");
  save_model(dir, adapted_toy(8));
  fs::resize_file(dir / "weights.bin", fs::file_size(dir / "weights.bin") - 8);
  EXPECT_THROW(load_tensors<double>(dir), FormatError);
}
