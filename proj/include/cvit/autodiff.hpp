#pragma once

// Tape-based reverse-mode differentiation.
//
// Every op whose inputs require grad appends a backward closure to the
// calling thread's tape. backward() replays the tape in reverse, which is a
// valid topological order because entries are appended in execution order.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "cvit/tensor.hpp"

namespace cvit {

template <typename T>
class Tape {
 public:
  void record(std::function<void()> entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  // Runs recorded entries newest first, then clears the tape.
  void replay();

  static Tape& current();

 private:
  std::vector<std::function<void()>> entries_;
};

bool grad_mode_enabled();

/// Disables recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Seeds d(loss)/d(loss) = 1 and populates grads of every reachable tensor
// that requires grad. Throws ContractError for a non-scalar loss or an empty
// tape.
template <typename T>
void backward(Tensor<T>& loss);

template <typename T>
void clear_tape() {
  Tape<T>::current().clear();
}

namespace detail {

template <typename T>
bool needs_grad(const Tensor<T>& t) {
  return t.defined() && t.requires_grad();
}

// Adds `values` into the gradient of `impl`, allocating it if needed.
template <typename T>
void accumulate_grad(TensorImpl<T>& impl, const std::vector<T>& values);

template <typename T>
std::vector<T>& grad_buffer(TensorImpl<T>& impl) {
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), T{0});
  return impl.grad;
}

// Marks `out` as a differentiable non-leaf when recording is on and any
// input requires grad. Returns whether a tape entry should be recorded.
template <typename T>
bool track(Tensor<T>& out, std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_mode_enabled()) return false;
  for (const Tensor<T>* in : inputs) {
    if (needs_grad(*in)) {
      out.impl()->requires_grad = true;
      out.impl()->leaf = false;
      return true;
    }
  }
  return false;
}

}  // namespace detail

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace cvit
