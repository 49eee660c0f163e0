#pragma once

// Keyed block-wise image scrambling.
//
// An image is cut into non-overlapping P×P blocks. Each block is flattened
// channel-major (index c·P² + y·P + x) into a vector of 3P² bytes, and every
// block of every image is permuted by the same keyed permutation.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cvit {

struct EncryptionKey {
  std::uint64_t seed = 0;
  friend bool operator==(EncryptionKey, EncryptionKey) = default;
};

/// SplitMix64 generator. Pinned so permutations are reproducible across
/// implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();

 private:
  std::uint64_t state_;
};

struct BlockPermutation {
  std::size_t patch_size = 0;
  std::vector<std::uint32_t> forward;
  std::vector<std::uint32_t> inverse;
  EncryptionKey key;

  std::size_t block_len() const { return forward.size(); }
  bool is_identity() const;
};

// Descending Fisher-Yates over [0, 3P²) with j = next() mod (i + 1).
BlockPermutation derive_permutation(EncryptionKey key, std::size_t patch_size);
BlockPermutation identity_permutation(std::size_t patch_size);

// Number of derive_permutation calls made by this process.
std::uint64_t permutation_derivations();

// log2 of the reachable key space, min((3P²)!, 2^64).
double key_space_bits(std::size_t patch_size);

/// 8-bit RGB image, channel-major: pixels[c·H·W + y·W + x].
struct ImageU8 {
  static constexpr std::size_t kChannels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(std::size_t h, std::size_t w) : height(h), width(w), pixels(kChannels * h * w) {}

  std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  std::uint8_t& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

// v'[k] = v[forward[k]] for every block vector v.
ImageU8 encrypt_image(const ImageU8& img, const BlockPermutation& perm);
ImageU8 decrypt_image(const ImageU8& img, const BlockPermutation& perm);

// In-place batch variants; blocks are independent, so images are processed
// by the worker pool when one is configured.
void encrypt_images(std::span<ImageU8> images, const BlockPermutation& perm);
void decrypt_images(std::span<ImageU8> images, const BlockPermutation& perm);

// Throws GeometryError naming H, W and P unless both sides divide by P.
void check_block_geometry(std::size_t height, std::size_t width, std::size_t patch_size);

}  // namespace cvit
