#include "cvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cvit/errors.hpp"
#include "cvit/kernels.hpp"

namespace cvit {

ImageU8 Cifar10Record::image() const {
  ImageU8 img(kCifarSide, kCifarSide);
  std::copy(pixels.begin(), pixels.end(), img.pixels.begin());
  return img;
}

std::vector<Cifar10Record> load_cifar10(const std::filesystem::path& file, std::size_t limit) {
  std::ifstream in(file, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + file.string());
  const auto size = static_cast<std::uint64_t>(in.tellg());
  if (size % kCifarRecordBytes != 0) {
    const std::uint64_t tail = size - size % kCifarRecordBytes;
    throw FormatError(file.string() + ": length " + std::to_string(size) +
                      " is not a multiple of " + std::to_string(kCifarRecordBytes) +
                      "; truncated record at byte offset " + std::to_string(tail));
  }
  std::size_t count = static_cast<std::size_t>(size / kCifarRecordBytes);
  if (limit > 0) count = std::min(count, limit);
  in.seekg(0);
  std::vector<Cifar10Record> records(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& rec = records[i];
    char label = 0;
    in.get(label);
    in.read(reinterpret_cast<char*>(rec.pixels.data()), kCifarPixelBytes);
    if (!in) {
      throw FormatError(file.string() + ": short read at byte offset " +
                        std::to_string(i * kCifarRecordBytes));
    }
    rec.label = static_cast<std::uint8_t>(label);
    if (rec.label > 9) {
      throw FormatError(file.string() + ": label " + std::to_string(rec.label) +
                        " at byte offset " + std::to_string(i * kCifarRecordBytes) +
                        " outside [0, 9]");
    }
  }
  return records;
}

void write_cifar10(const std::filesystem::path& file, const std::vector<Cifar10Record>& records) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& rec : records) {
    out.put(static_cast<char>(rec.label));
    out.write(reinterpret_cast<const char*>(rec.pixels.data()), kCifarPixelBytes);
  }
  if (!out) throw IoError("failed writing " + file.string());
}

CifarSplits load_cifar10_dir(const std::filesystem::path& dir) {
  CifarSplits splits;
  for (int i = 1; i <= 5; ++i) {
    const auto path = dir / ("data_batch_" + std::to_string(i) + ".bin");
    if (!std::filesystem::exists(path)) continue;
    auto batch = load_cifar10(path);
    splits.train.insert(splits.train.end(), batch.begin(), batch.end());
  }
  if (splits.train.empty()) {
    throw IoError(dir.string() + ": no data_batch_*.bin files found");
  }
  const auto test_path = dir / "test_batch.bin";
  if (!std::filesystem::exists(test_path)) throw IoError(test_path.string() + " not found");
  splits.test = load_cifar10(test_path);
  return splits;
}

std::vector<Cifar10Record> select_classes(const std::vector<Cifar10Record>& records,
                                          const std::vector<std::uint8_t>& classes,
                                          std::size_t limit) {
  std::vector<Cifar10Record> out;
  for (const auto& rec : records) {
    if (limit > 0 && out.size() == limit) break;
    if (classes.empty()) {
      out.push_back(rec);
      continue;
    }
    const auto it = std::find(classes.begin(), classes.end(), rec.label);
    if (it == classes.end()) continue;
    Cifar10Record kept = rec;
    kept.label = static_cast<std::uint8_t>(it - classes.begin());
    out.push_back(kept);
  }
  return out;
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

}  // namespace

ImageU8 resize(const ImageU8& img, std::size_t target, Interpolation mode) {
  if (target < 1) throw ParameterError("resize target must be >= 1");
  if (img.height == 0 || img.width == 0 || img.pixels.size() != 3 * img.height * img.width) {
    throw ParameterError("resize: invalid source image");
  }
  if (img.height == target && img.width == target) return img;
  ImageU8 out(target, target);
  const double sy = static_cast<double>(img.height) / static_cast<double>(target);
  const double sx = static_cast<double>(img.width) / static_cast<double>(target);
  const auto max_y = static_cast<double>(img.height - 1);
  const auto max_x = static_cast<double>(img.width - 1);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < target; ++y) {
      for (std::size_t x = 0; x < target; ++x) {
        if (mode == Interpolation::kNearest) {
          const auto iy = std::min(static_cast<std::size_t>((y + 0.5) * sy), img.height - 1);
          const auto ix = std::min(static_cast<std::size_t>((x + 0.5) * sx), img.width - 1);
          out.at(c, y, x) = img.at(c, iy, ix);
          continue;
        }
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
        const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
        const auto y0 = static_cast<std::size_t>(fy);
        const auto x0 = static_cast<std::size_t>(fx);
        const std::size_t y1 = std::min(y0 + 1, img.height - 1);
        const std::size_t x1 = std::min(x0 + 1, img.width - 1);
        const double wy = fy - static_cast<double>(y0);
        const double wx = fx - static_cast<double>(x0);
        const double top = img.at(c, y0, x0) * (1.0 - wx) + img.at(c, y0, x1) * wx;
        const double bottom = img.at(c, y1, x0) * (1.0 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = to_byte(top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

template <typename T>
FloatImage<T> normalize(const ImageU8& img, const std::array<double, 3>& mean,
                        const std::array<double, 3>& std) {
  FloatImage<T> out(img.height, img.width);
  const std::size_t plane = img.height * img.width;
  for (std::size_t c = 0; c < 3; ++c) {
    if (!(std[c] > 0.0)) throw ParameterError("normalization std must be positive");
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = img.pixels[c * plane + i] / 255.0;
      out.values[c * plane + i] = static_cast<T>((v - mean[c]) / std[c]);
    }
  }
  return out;
}

template <typename T>
FloatImage<T> preprocess_image(const ImageU8& img, const PreprocessSpec& spec,
                               const BlockPermutation* perm) {
  ImageU8 resized = resize(img, spec.target_size, spec.interpolation);
  if (perm != nullptr) resized = encrypt_image(resized, *perm);
  return normalize<T>(resized, spec.mean, spec.std);
}

namespace {

void validate_spec(const PreprocessSpec& spec) {
  if (spec.target_size < 1) throw ParameterError("target_size must be >= 1");
  if (spec.key) check_block_geometry(spec.target_size, spec.target_size, spec.block_size);
  for (double s : spec.std) {
    if (!(s > 0.0)) throw ParameterError("normalization std must be positive");
  }
}

template <typename T>
Dataset<T> run_pipeline(const std::vector<Cifar10Record>& records, const PreprocessSpec& spec,
                        const BlockPermutation* perm) {
  Dataset<T> out(records.size());
  kernels::for_each_index(records.size(), [&](std::size_t i) {
    out[i].image = preprocess_image<T>(records[i].image(), spec, perm);
    out[i].label = records[i].label;
  });
  return out;
}

}  // namespace

template <typename T>
PreparedSplits<T> prepare(const std::vector<Cifar10Record>& train,
                          const std::vector<Cifar10Record>& test, const PreprocessSpec& spec) {
  validate_spec(spec);
  std::optional<BlockPermutation> perm;
  if (spec.key) perm = derive_permutation(*spec.key, spec.block_size);
  const BlockPermutation* p = perm ? &*perm : nullptr;
  return {run_pipeline<T>(train, spec, p), run_pipeline<T>(test, spec, p)};
}

template <typename T>
Dataset<T> prepare(const std::vector<Cifar10Record>& records, const PreprocessSpec& spec) {
  validate_spec(spec);
  std::optional<BlockPermutation> perm;
  if (spec.key) perm = derive_permutation(*spec.key, spec.block_size);
  return run_pipeline<T>(records, spec, perm ? &*perm : nullptr);
}

#define CVIT_INSTANTIATE_DATA(T)                                                           \
  template FloatImage<T> normalize<T>(const ImageU8&, const std::array<double, 3>&,        \
                                      const std::array<double, 3>&);                       \
  template FloatImage<T> preprocess_image<T>(const ImageU8&, const PreprocessSpec&,        \
                                             const BlockPermutation*);                     \
  template PreparedSplits<T> prepare<T>(const std::vector<Cifar10Record>&,                 \
                                        const std::vector<Cifar10Record>&,                 \
                                        const PreprocessSpec&);                            \
  template Dataset<T> prepare<T>(const std::vector<Cifar10Record>&, const PreprocessSpec&);

CVIT_INSTANTIATE_DATA(float)
CVIT_INSTANTIATE_DATA(double)

#undef CVIT_INSTANTIATE_DATA

}  // namespace cvit
