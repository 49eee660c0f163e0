#include "cvit/autodiff.hpp"

#include <algorithm>

#include "cvit/errors.hpp"

namespace cvit {
namespace {

thread_local bool t_grad_mode = true;

}  // namespace

bool grad_mode_enabled() { return t_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(t_grad_mode) { t_grad_mode = false; }
NoGradGuard::~NoGradGuard() { t_grad_mode = previous_; }

template <typename T>
Tape<T>& Tape<T>::current() {
  thread_local Tape<T> tape;
  return tape;
}

template <typename T>
void Tape<T>::replay() {
  // Entries may not re-enter the tape, so iterate over a moved-out copy.
  auto entries = std::move(entries_);
  entries_.clear();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) (*it)();
}

template <typename T>
void backward(Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : "[]"));
  }
  auto& tape = Tape<T>::current();
  if (tape.empty()) throw ContractError("backward() called on an empty tape");
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that does not depend on any trainable tensor");
  }
  auto& seed = detail::grad_buffer(*loss.impl());
  std::fill(seed.begin(), seed.end(), T{1});
  tape.replay();
}

namespace detail {

template <typename T>
void accumulate_grad(TensorImpl<T>& impl, const std::vector<T>& values) {
  auto& grad = grad_buffer(impl);
  for (std::size_t i = 0; i < values.size(); ++i) grad[i] += values[i];
}

template void accumulate_grad<float>(TensorImpl<float>&, const std::vector<float>&);
template void accumulate_grad<double>(TensorImpl<double>&, const std::vector<double>&);

}  // namespace detail

template class Tape<float>;
template class Tape<double>;
template void backward<float>(Tensor<float>&);
template void backward<double>(Tensor<double>&);

}  // namespace cvit
