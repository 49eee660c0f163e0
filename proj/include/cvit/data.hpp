#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cvit/crypto.hpp"
#include "cvit/float_image.hpp"

namespace cvit {

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixelBytes = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecordBytes = kCifarPixelBytes + 1;

/// One CIFAR-10 binary record: label byte, then 1024 R, 1024 G, 1024 B bytes,
/// each plane row-major 32×32.
struct Cifar10Record {
  std::uint8_t label = 0;
  std::array<std::uint8_t, kCifarPixelBytes> pixels{};

  ImageU8 image() const;
};

// Reads a CIFAR-10 binary batch file. `limit` > 0 keeps only that many
// leading records. Throws FormatError (with the trailing byte offset) when the
// file length is not a multiple of 3073, or when a label exceeds 9.
std::vector<Cifar10Record> load_cifar10(const std::filesystem::path& file, std::size_t limit = 0);

void write_cifar10(const std::filesystem::path& file, const std::vector<Cifar10Record>& records);

struct CifarSplits {
  std::vector<Cifar10Record> train;
  std::vector<Cifar10Record> test;
};

// data_batch_1.bin .. data_batch_5.bin (those present, in order) and
// test_batch.bin.
CifarSplits load_cifar10_dir(const std::filesystem::path& dir);

// Keeps records whose label is in `classes` (all when empty), remaps labels
// to their index in `classes`, then truncates to `limit` (0 = no limit).
std::vector<Cifar10Record> select_classes(const std::vector<Cifar10Record>& records,
                                          const std::vector<std::uint8_t>& classes,
                                          std::size_t limit);

enum class Interpolation { kNearest, kBilinear };

// Square resize. Bilinear uses half-pixel centres (align_corners = false) with
// edge clamping; results round half up to 8 bits.
ImageU8 resize(const ImageU8& img, std::size_t target, Interpolation mode = Interpolation::kBilinear);

struct PreprocessSpec {
  std::size_t target_size = 224;
  Interpolation interpolation = Interpolation::kBilinear;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.5, 0.5, 0.5};
  std::optional<EncryptionKey> key;
  std::size_t block_size = 16;
};

template <typename T>
FloatImage<T> normalize(const ImageU8& img, const std::array<double, 3>& mean,
                        const std::array<double, 3>& std);

template <typename T>
struct Example {
  FloatImage<T> image;
  std::size_t label = 0;
};

template <typename T>
using Dataset = std::vector<Example<T>>;

// resize → encrypt (optional) → normalize for one image.
template <typename T>
FloatImage<T> preprocess_image(const ImageU8& img, const PreprocessSpec& spec,
                               const BlockPermutation* perm);

template <typename T>
struct PreparedSplits {
  Dataset<T> train;
  Dataset<T> test;
};

// Validates geometry up front, derives the block permutation once (when a key
// is set) and applies it to every image of both splits.
template <typename T>
PreparedSplits<T> prepare(const std::vector<Cifar10Record>& train,
                          const std::vector<Cifar10Record>& test, const PreprocessSpec& spec);

template <typename T>
Dataset<T> prepare(const std::vector<Cifar10Record>& records, const PreprocessSpec& spec);

}  // namespace cvit
