#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cvit/tensor.hpp"

namespace cvit {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  std::uint64_t step_count = 0;
  AdamConfig hyper;

  AdamState() = default;
  AdamState(std::size_t size, AdamConfig config)
      : first_moment(size, T{0}), second_moment(size, T{0}), hyper(config) {}
};

// One bias-corrected Adam update of `params` in place.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state);

/// Adam over a fixed list of named tensors. State is allocated only for the
/// tensors handed in, so frozen parameters carry no optimizer memory.
template <typename T>
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor<T>>> params, AdamConfig config);

  // Tensors without a gradient (unreached by the last backward) are skipped.
  void step();
  void zero_grad();

  std::size_t state_elements() const;
  const std::vector<std::pair<std::string, Tensor<T>>>& params() const { return params_; }
  const AdamState<T>& state(std::size_t i) const { return states_.at(i); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<AdamState<T>> states_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace cvit
