#include "cvit/crypto.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>

#include "cvit/errors.hpp"
#include "cvit/kernels.hpp"

namespace cvit {
namespace {

std::atomic<std::uint64_t> g_derivations{0};

enum class Direction { kEncrypt, kDecrypt };

void validate_image(const ImageU8& img) {
  if (img.pixels.size() != ImageU8::kChannels * img.height * img.width) {
    throw DimensionError("image buffer holds " + std::to_string(img.pixels.size()) +
                         " bytes, expected 3x" + std::to_string(img.height) + "x" +
                         std::to_string(img.width));
  }
}

// Gathers each block into a scratch vector and scatters it back permuted.
void permute_blocks(ImageU8& img, const BlockPermutation& perm, Direction dir) {
  validate_image(img);
  const std::size_t p = perm.patch_size;
  check_block_geometry(img.height, img.width, p);
  const auto& table = dir == Direction::kEncrypt ? perm.forward : perm.inverse;
  const std::size_t n = perm.block_len();
  const std::size_t plane = img.height * img.width;
  std::vector<std::uint8_t> block(n);
  std::vector<std::size_t> offsets(n);
  for (std::size_t c = 0; c < ImageU8::kChannels; ++c) {
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) {
        offsets[(c * p + y) * p + x] = c * plane + y * img.width + x;
      }
    }
  }
  for (std::size_t by = 0; by < img.height; by += p) {
    for (std::size_t bx = 0; bx < img.width; bx += p) {
      const std::size_t origin = by * img.width + bx;
      for (std::size_t k = 0; k < n; ++k) block[k] = img.pixels[origin + offsets[k]];
      for (std::size_t k = 0; k < n; ++k) img.pixels[origin + offsets[k]] = block[table[k]];
    }
  }
}

}  // namespace

std::uint64_t SplitMix64::next() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool BlockPermutation::is_identity() const {
  for (std::size_t i = 0; i < forward.size(); ++i) {
    if (forward[i] != i) return false;
  }
  return true;
}

BlockPermutation identity_permutation(std::size_t patch_size) {
  if (patch_size == 0) throw ParameterError("patch size must be >= 1");
  BlockPermutation perm;
  perm.patch_size = patch_size;
  perm.forward.resize(3 * patch_size * patch_size);
  std::iota(perm.forward.begin(), perm.forward.end(), 0U);
  perm.inverse = perm.forward;
  return perm;
}

BlockPermutation derive_permutation(EncryptionKey key, std::size_t patch_size) {
  if (patch_size == 0) throw ParameterError("patch size must be >= 1");
  g_derivations.fetch_add(1, std::memory_order_relaxed);
  BlockPermutation perm = identity_permutation(patch_size);
  perm.key = key;
  SplitMix64 rng(key.seed);
  auto& seq = perm.forward;
  for (std::size_t i = seq.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next() % (i + 1));
    std::swap(seq[i], seq[j]);
  }
  for (std::size_t k = 0; k < seq.size(); ++k) perm.inverse[seq[k]] = static_cast<std::uint32_t>(k);
  return perm;
}

std::uint64_t permutation_derivations() {
  return g_derivations.load(std::memory_order_relaxed);
}

double key_space_bits(std::size_t patch_size) {
  const double n = 3.0 * static_cast<double>(patch_size) * static_cast<double>(patch_size);
  const double log2_factorial = std::lgamma(n + 1.0) / std::log(2.0);
  return std::min(log2_factorial, 64.0);
}

void check_block_geometry(std::size_t height, std::size_t width, std::size_t patch_size) {
  if (patch_size == 0) throw ParameterError("patch size must be >= 1");
  if (height == 0 || width == 0 || height % patch_size != 0 || width % patch_size != 0) {
    throw GeometryError("image " + std::to_string(height) + "x" + std::to_string(width) +
                        " (HxW) is not divisible into " + std::to_string(patch_size) + "x" +
                        std::to_string(patch_size) + " blocks (P=" +
                        std::to_string(patch_size) + ")");
  }
}

ImageU8 encrypt_image(const ImageU8& img, const BlockPermutation& perm) {
  ImageU8 out = img;
  permute_blocks(out, perm, Direction::kEncrypt);
  return out;
}

ImageU8 decrypt_image(const ImageU8& img, const BlockPermutation& perm) {
  ImageU8 out = img;
  permute_blocks(out, perm, Direction::kDecrypt);
  return out;
}

void encrypt_images(std::span<ImageU8> images, const BlockPermutation& perm) {
  for (const auto& img : images) check_block_geometry(img.height, img.width, perm.patch_size);
  kernels::for_each_index(images.size(), [&](std::size_t i) {
    permute_blocks(images[i], perm, Direction::kEncrypt);
  });
}

void decrypt_images(std::span<ImageU8> images, const BlockPermutation& perm) {
  for (const auto& img : images) check_block_geometry(img.height, img.width, perm.patch_size);
  kernels::for_each_index(images.size(), [&](std::size_t i) {
    permute_blocks(images[i], perm, Direction::kDecrypt);
  });
}

}  // namespace cvit
