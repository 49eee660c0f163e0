#pragma once

// Deterministic CIFAR-10-shaped image sets for tests and offline runs.
//
// Each class has a fixed colour tint and an oriented sinusoidal texture;
// every image draws its own phase, contrast, brightness offset and pixel
// noise, so classes overlap in raw pixel statistics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cvit/data.hpp"

namespace cvit {

// `count` records with labels cycling 0, 1, …, 9.
std::vector<Cifar10Record> synthetic_cifar(std::size_t count, std::uint64_t seed);

// Writes data_batch_1.bin (train_count records) and test_batch.bin
// (test_count records) into `dir`.
void write_synthetic_cifar_dir(const std::filesystem::path& dir, std::size_t train_count,
                               std::size_t test_count, std::uint64_t seed);

}  // namespace cvit
