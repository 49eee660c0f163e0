#include "cvit/adam.hpp"

#include <cmath>

#include "cvit/errors.hpp"

namespace cvit {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw DimensionError("adam_step: params (" + std::to_string(params.size()) +
                         "), grads (" + std::to_string(grads.size()) + ") and moments (" +
                         std::to_string(state.first_moment.size()) + ") disagree");
  }
  state.step_count += 1;
  const T lr = static_cast<T>(state.hyper.lr);
  const T b1 = static_cast<T>(state.hyper.beta1);
  const T b2 = static_cast<T>(state.hyper.beta2);
  const T eps = static_cast<T>(state.hyper.epsilon);
  const auto t = static_cast<double>(state.step_count);
  const T correction1 = static_cast<T>(1.0 - std::pow(state.hyper.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(state.hyper.beta2, t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    T& m = state.first_moment[i];
    T& v = state.second_moment[i];
    m = b1 * m + (T{1} - b1) * g;
    v = b2 * v + (T{1} - b2) * g * g;
    const T m_hat = m / correction1;
    const T v_hat = v / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
Adam<T>::Adam(std::vector<std::pair<std::string, Tensor<T>>> params, AdamConfig config)
    : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (const auto& [name, tensor] : params_) states_.emplace_back(tensor.numel(), config);
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& tensor = params_[i].second;
    if (!tensor.has_grad()) continue;
    adam_step<T>(tensor.mutable_data(), tensor.grad(), states_[i]);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& [name, tensor] : params_) tensor.clear_grad();
}

template <typename T>
std::size_t Adam<T>::state_elements() const {
  std::size_t total = 0;
  for (const auto& s : states_) total += s.first_moment.size() + s.second_moment.size();
  return total;
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&);
template void adam_step<double>(std::span<double>, std::span<const double>,
                                AdamState<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace cvit
