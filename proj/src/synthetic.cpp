#include "cvit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cvit/random.hpp"

namespace cvit {
namespace {

struct ClassStyle {
  double tint[3];
  double angle;
  double frequency;  // cycles per image width
};

ClassStyle style_of(std::size_t label) {
  const double k = static_cast<double>(label);
  ClassStyle s{};
  for (int c = 0; c < 3; ++c) {
    s.tint[c] = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * (k / 10.0 + c / 3.0));
  }
  s.angle = std::numbers::pi * k / 10.0;
  s.frequency = 3.0 + static_cast<double>(label % 4);
  return s;
}

}  // namespace

std::vector<Cifar10Record> synthetic_cifar(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Cifar10Record> records(count);
  constexpr double kSide = static_cast<double>(kCifarSide);
  for (std::size_t i = 0; i < count; ++i) {
    auto& rec = records[i];
    rec.label = static_cast<std::uint8_t>(i % 10);
    const ClassStyle style = style_of(rec.label);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double contrast = rng.uniform(25.0, 60.0);
    const double brightness = rng.uniform(-30.0, 30.0);
    const double tint_strength = rng.uniform(10.0, 40.0);
    const double cx = std::cos(style.angle);
    const double cy = std::sin(style.angle);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < kCifarSide; ++y) {
        for (std::size_t x = 0; x < kCifarSide; ++x) {
          const double t = 2.0 * std::numbers::pi * style.frequency *
                               (cx * static_cast<double>(x) + cy * static_cast<double>(y)) / kSide +
                           phase;
          const double v = 128.0 + brightness + tint_strength * (style.tint[c] - 0.5) +
                           contrast * std::sin(t) * (0.5 + style.tint[c]) + 18.0 * rng.normal();
          rec.pixels[(c * kCifarSide + y) * kCifarSide + x] =
              static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    }
  }
  return records;
}

void write_synthetic_cifar_dir(const std::filesystem::path& dir, std::size_t train_count,
                               std::size_t test_count, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  write_cifar10(dir / "data_batch_1.bin", synthetic_cifar(train_count, seed));
  write_cifar10(dir / "test_batch.bin", synthetic_cifar(test_count, seed ^ 0x5DEECE66DULL));
}

}  // namespace cvit
