#include "cvit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cvit/config.hpp"
#include "cvit/errors.hpp"
#include "cvit/lora.hpp"

namespace cvit {
namespace {

using nlohmann::json;

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kWeightsFile = "weights.bin";
constexpr const char* kConfigFile = "config.json";
constexpr const char* kFormatName = "cvit-checkpoint";
constexpr int kFormatVersion = 1;

template <typename T>
void append_le(std::vector<char>& out, std::span<const T> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(T));
  std::memcpy(out.data() + start, values.data(), values.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = start; i < out.size(); i += sizeof(T)) {
      std::reverse(out.begin() + static_cast<std::ptrdiff_t>(i),
                   out.begin() + static_cast<std::ptrdiff_t>(i + sizeof(T)));
    }
  }
}

template <typename S>
std::vector<S> decode_le(const char* bytes, std::size_t count) {
  std::vector<S> out(count);
  std::memcpy(out.data(), bytes, count * sizeof(S));
  if constexpr (std::endian::native == std::endian::big) {
    auto* raw = reinterpret_cast<char*>(out.data());
    for (std::size_t i = 0; i < count; ++i) std::reverse(raw + i * sizeof(S), raw + (i + 1) * sizeof(S));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::string to_string(DType dtype) { return dtype == DType::kF32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& text) {
  if (text == "f32") return DType::kF32;
  if (text == "f64") return DType::kF64;
  throw FormatError("unknown dtype '" + text + "'");
}

std::size_t dtype_size(DType dtype) { return dtype == DType::kF32 ? 4 : 8; }

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const json doc = read_json(dir / kManifestFile);
  if (doc.value("format", "") != kFormatName) {
    throw FormatError((dir / kManifestFile).string() + ": not a " + kFormatName + " manifest");
  }
  std::vector<ManifestEntry> entries;
  std::uint64_t expected_offset = 0;
  try {
    for (const auto& item : doc.at("tensors")) {
      ManifestEntry e;
      e.name = item.at("name").get<std::string>();
      e.dtype = parse_dtype(item.at("dtype").get<std::string>());
      e.shape = item.at("shape").get<Shape>();
      e.offset = item.at("offset").get<std::uint64_t>();
      e.length = item.at("length").get<std::uint64_t>();
      if (e.offset != expected_offset || e.length != numel(e.shape) * dtype_size(e.dtype)) {
        throw FormatError("manifest entry '" + e.name + "' has inconsistent offset/length");
      }
      expected_offset += e.length;
      entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError((dir / kManifestFile).string() + ": " + e.what());
  }
  return entries;
}

template <typename T>
void save_tensors(const std::filesystem::path& dir,
                  const std::vector<std::pair<std::string, Tensor<T>>>& entries,
                  const NameFilter& keep) {
  std::filesystem::create_directories(dir);
  json tensors = json::array();
  std::vector<char> blob;
  for (const auto& [name, tensor] : entries) {
    if (keep && !keep(name)) continue;
    const std::uint64_t offset = blob.size();
    append_le<T>(blob, tensor.data());
    tensors.push_back(json{{"name", name},
                           {"dtype", to_string(dtype_of<T>())},
                           {"shape", tensor.shape()},
                           {"offset", offset},
                           {"length", blob.size() - offset}});
  }
  const json manifest{{"format", kFormatName}, {"version", kFormatVersion}, {"tensors", tensors}};
  write_text(dir / kManifestFile, manifest.dump(2) + "\n");
  std::ofstream out(dir / kWeightsFile, std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / kWeightsFile).string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("failed writing " + (dir / kWeightsFile).string());
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> load_tensors(const std::filesystem::path& dir) {
  const auto manifest = read_manifest(dir);
  const auto weights_path = dir / kWeightsFile;
  std::ifstream in(weights_path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + weights_path.string());
  const auto size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  std::vector<char> blob(size);
  in.read(blob.data(), static_cast<std::streamsize>(size));
  std::uint64_t needed = 0;
  for (const auto& e : manifest) needed = e.offset + e.length;
  if (needed != size) {
    throw FormatError(weights_path.string() + ": size " + std::to_string(size) +
                      " does not match manifest total " + std::to_string(needed));
  }
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto& e : manifest) {
    const std::size_t count = numel(e.shape);
    std::vector<T> values(count);
    if (e.dtype == DType::kF32) {
      const auto raw = decode_le<float>(blob.data() + e.offset, count);
      std::copy(raw.begin(), raw.end(), values.begin());
    } else {
      const auto raw = decode_le<double>(blob.data() + e.offset, count);
      for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<T>(raw[i]);
    }
    out.emplace_back(e.name, Tensor<T>(e.shape, std::move(values)));
  }
  return out;
}

template <typename T>
void save_model(const std::filesystem::path& dir, const ViTModel<T>& model, bool adapters_only) {
  std::filesystem::create_directories(dir);
  json cfg{{"vit", to_json(model.config())}};
  if (model.lora()) cfg["lora"] = to_json(*model.lora());
  write_text(dir / kConfigFile, cfg.dump(2) + "\n");
  NameFilter keep;
  if (adapters_only) {
    keep = [](const std::string& name) { return name.rfind(kLoraPrefix, 0) == 0; };
  }
  save_tensors<T>(dir, model.registry().entries(), keep);
}

template <typename T>
std::size_t load_into(ViTModel<T>& model, const std::filesystem::path& dir) {
  std::size_t loaded = 0;
  for (auto& [name, tensor] : load_tensors<T>(dir)) {
    Tensor<T>& dst = model.param(name);
    if (dst.shape() != tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " +
                           shape_string(tensor.shape()) + ", model expects " +
                           shape_string(dst.shape()));
    }
    std::copy(tensor.data().begin(), tensor.data().end(), dst.mutable_data().begin());
    ++loaded;
  }
  return loaded;
}

template <typename T>
ViTModel<T> load_model(const std::filesystem::path& dir) {
  const json cfg = read_json(dir / kConfigFile);
  ViTModel<T> model(parse_vit_config(cfg.at("vit")), 0, ViTModel<T>::Init::kZeros);
  if (cfg.contains("lora")) inject(model, parse_lora_config(cfg.at("lora")), 0);
  const std::size_t loaded = load_into(model, dir);
  if (loaded != model.registry().size()) {
    throw FormatError(dir.string() + ": checkpoint holds " + std::to_string(loaded) +
                      " tensors, model needs " + std::to_string(model.registry().size()));
  }
  return model;
}

#define CVIT_INSTANTIATE_CKPT(T)                                                              \
  template void save_tensors<T>(const std::filesystem::path&,                                 \
                                const std::vector<std::pair<std::string, Tensor<T>>>&,        \
                                const NameFilter&);                                           \
  template std::vector<std::pair<std::string, Tensor<T>>> load_tensors<T>(                    \
      const std::filesystem::path&);                                                          \
  template void save_model<T>(const std::filesystem::path&, const ViTModel<T>&, bool);        \
  template ViTModel<T> load_model<T>(const std::filesystem::path&);                           \
  template std::size_t load_into<T>(ViTModel<T>&, const std::filesystem::path&);

CVIT_INSTANTIATE_CKPT(float)
CVIT_INSTANTIATE_CKPT(double)

#undef CVIT_INSTANTIATE_CKPT

}  // namespace cvit
