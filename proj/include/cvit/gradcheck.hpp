#pragma once

// Central-difference verification of reverse-mode gradients (64-bit only).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cvit/lora_config.hpp"
#include "cvit/tensor.hpp"
#include "cvit/vit.hpp"

namespace cvit {

struct GradcheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  // Gradients smaller than this in magnitude are compared absolutely.
  double floor = 1e-6;
};

struct Probe {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

struct GradcheckReport {
  std::vector<Probe> probes;
  double max_error = 0.0;
  std::size_t failures = 0;

  bool passed() const { return failures == 0 && !probes.empty(); }
};

// |a − n| / max(|a|, |n|, floor)
double gradient_error(double analytic, double numeric, double floor);

using NamedTensors = std::vector<std::pair<std::string, Tensor<double>>>;

// `loss_fn` must rebuild the scalar loss from the current tensor values each
// call. Each (param index, element) pair in `coords` is probed.
GradcheckReport check_gradients(const std::function<Tensor<double>()>& loss_fn,
                                const NamedTensors& params,
                                const std::vector<std::pair<std::size_t, std::size_t>>& coords,
                                const GradcheckOptions& options);

// Picks `per_param` random coordinates from every tensor (fewer when the
// tensor is smaller).
std::vector<std::pair<std::size_t, std::size_t>> sample_coords(const NamedTensors& params,
                                                               std::size_t per_param,
                                                               std::uint64_t seed);

// Gradient check of a full adapted ViT: random weights, non-zero adapter B
// factors, every tensor trainable. At least `min_probes` coordinates are
// drawn, split across adapter A, adapter B, patch embedding, head and the
// remaining tensors.
GradcheckReport gradcheck_vit(const ViTConfig& config, const LoraConfig& lora,
                              const GradcheckOptions& options, std::size_t min_probes = 100,
                              std::uint64_t seed = 0);

}  // namespace cvit
