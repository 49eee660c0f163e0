#pragma once

#include <filesystem>
#include <string>

#include "cvit/crypto.hpp"

namespace cvit {

// Binary PPM (P6, maxval 255). Comments in the header are skipped.
ImageU8 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageU8& img);

// Plain text, one forward index per line.
void write_permutation_file(const std::filesystem::path& path, const BlockPermutation& perm);
std::vector<std::uint32_t> read_permutation_file(const std::filesystem::path& path);

// perm_<key>_<P>.txt
std::string permutation_file_name(EncryptionKey key, std::size_t patch_size);

}  // namespace cvit
