#include "cvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "cvit/autodiff.hpp"
#include "cvit/errors.hpp"
#include "cvit/kernels.hpp"

namespace cvit {
namespace {

using detail::grad_buffer;
using detail::needs_grad;
using detail::track;

struct MatrixDims {
  std::size_t rows;
  std::size_t cols;
};

template <typename T>
MatrixDims matrix_dims(const Tensor<T>& t, const char* op) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw DimensionError(std::string(op) + ": expected a rank-1 or rank-2 tensor, got " +
                       shape_string(t.shape()));
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) +
                         " vs " + shape_string(b));
  }
}

template <typename T>
std::span<const T> cspan(const std::vector<T>& v) {
  return std::span<const T>(v.data(), v.size());
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto [m, k] = matrix_dims(a, "matmul");
  const auto [k2, n] = matrix_dims(b, "matmul");
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  Tensor<T> out(Shape{m, n});
  kernels::gemm_nn<T>(a.data(), b.data(), out.mutable_data(), m, k, n);
  if (track(out, {&a, &b})) {
    Tape<T>::current().record([a = a.impl(), b = b.impl(), o = out.impl(), m, k, n] {
      if (o->grad.empty()) return;
      if (a->requires_grad) {
        kernels::gemm_nt<T>(cspan(o->grad), cspan(b->data), grad_buffer(*a), m, n, k);
      }
      if (b->requires_grad) {
        kernels::gemm_tn<T>(cspan(a->data), cspan(o->grad), grad_buffer(*b), k, m, n);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  const auto [m, k] = matrix_dims(a, "matmul_nt");
  const auto [n, k2] = matrix_dims(b, "matmul_nt");
  if (k != k2) {
    throw DimensionError("matmul_nt: inner dimensions disagree for " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  Tensor<T> out(Shape{m, n});
  kernels::gemm_nt<T>(a.data(), b.data(), out.mutable_data(), m, k, n);
  if (track(out, {&a, &b})) {
    Tape<T>::current().record([a = a.impl(), b = b.impl(), o = out.impl(), m, k, n] {
      if (o->grad.empty()) return;
      if (a->requires_grad) {
        kernels::gemm_nn<T>(cspan(o->grad), cspan(b->data), grad_buffer(*a), m, n, k);
      }
      if (b->requires_grad) {
        kernels::gemm_tn<T>(cspan(o->grad), cspan(a->data), grad_buffer(*b), n, m, k);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  const auto [m, k] = matrix_dims(x, "linear");
  const auto [n, k2] = matrix_dims(w, "linear");
  if (k != k2) {
    throw DimensionError("linear: input " + shape_string(x.shape()) +
                         " does not match weight " + shape_string(w.shape()));
  }
  if (bias.defined() && bias.numel() != n) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) +
                         " does not match weight " + shape_string(w.shape()));
  }
  Tensor<T> out(Shape{m, n});
  auto o = out.mutable_data();
  if (bias.defined()) {
    const auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), o.begin() + i * n);
  }
  kernels::gemm_nt<T>(x.data(), w.data(), o, m, k, n);
  if (track(out, {&x, &w, &bias})) {
    auto bimpl = bias.defined() ? bias.impl() : nullptr;
    Tape<T>::current().record(
        [x = x.impl(), w = w.impl(), bimpl, o = out.impl(), m, k, n] {
          if (o->grad.empty()) return;
          const auto g = cspan(o->grad);
          if (x->requires_grad) {
            kernels::gemm_nn<T>(g, cspan(w->data), grad_buffer(*x), m, n, k);
          }
          if (w->requires_grad) {
            kernels::gemm_tn<T>(g, cspan(x->data), grad_buffer(*w), n, m, k);
          }
          if (bimpl && bimpl->requires_grad) {
            auto& gb = grad_buffer(*bimpl);
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
            }
          }
        });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  const auto [m, n] = matrix_dims(a, "transpose");
  Tensor<T> out(Shape{n, m});
  auto o = out.mutable_data();
  const auto in = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = in[i * n + j];
  }
  if (track(out, {&a})) {
    Tape<T>::current().record([a = a.impl(), o = out.impl(), m, n] {
      if (o->grad.empty()) return;
      auto& ga = grad_buffer(*a);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o->grad[j * m + i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  if (track(out, {&a, &b})) {
    Tape<T>::current().record([a = a.impl(), b = b.impl(), o = out.impl()] {
      if (o->grad.empty()) return;
      if (a->requires_grad) detail::accumulate_grad(*a, o->grad);
      if (b->requires_grad) detail::accumulate_grad(*b, o->grad);
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row) {
  const auto [m, n] = matrix_dims(x, "add_row");
  if (row.numel() != n) {
    throw DimensionError("add_row: row " + shape_string(row.shape()) +
                         " does not match " + shape_string(x.shape()));
  }
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto xv = x.data();
  const auto rv = row.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = xv[i * n + j] + rv[j];
  }
  if (track(out, {&x, &row})) {
    Tape<T>::current().record([x = x.impl(), r = row.impl(), o = out.impl(), m, n] {
      if (o->grad.empty()) return;
      if (x->requires_grad) detail::accumulate_grad(*x, o->grad);
      if (r->requires_grad) {
        auto& gr = grad_buffer(*r);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gr[j] += o->grad[i * n + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  if (track(out, {&a, &b})) {
    Tape<T>::current().record([a = a.impl(), b = b.impl(), o = out.impl()] {
      if (o->grad.empty()) return;
      const std::size_t count = o->grad.size();
      if (a->requires_grad) {
        auto& ga = grad_buffer(*a);
        for (std::size_t i = 0; i < count; ++i) ga[i] += o->grad[i] * b->data[i];
      }
      if (b->requires_grad) {
        auto& gb = grad_buffer(*b);
        for (std::size_t i = 0; i < count; ++i) gb[i] += o->grad[i] * a->data[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto av = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * factor;
  if (track(out, {&a})) {
    Tape<T>::current().record([a = a.impl(), o = out.impl(), factor] {
      if (o->grad.empty()) return;
      auto& ga = grad_buffer(*a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o->grad[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  Tensor<T> out = Tensor<T>::scalar(total);
  if (track(out, {&a})) {
    Tape<T>::current().record([a = a.impl(), o = out.impl()] {
      if (o->grad.empty()) return;
      auto& ga = grad_buffer(*a);
      for (T& g : ga) g += o->grad[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(x.shape()));
  }
  const auto& shape = x.shape();
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];

  Tensor<T> out(shape);
  auto o = out.mutable_data();
  const auto in = x.data();
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t b = 0; b < inner; ++b) {
      const std::size_t base = a * len * inner + b;
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < len; ++i) peak = std::max(peak, in[base + i * inner]);
      T total = 0;
      for (std::size_t i = 0; i < len; ++i) {
        const T e = std::exp(in[base + i * inner] - peak);
        o[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) o[base + i * inner] /= total;
    }
  }
  if (track(out, {&x})) {
    Tape<T>::current().record([x = x.impl(), o = out.impl(), outer, inner, len] {
      if (o->grad.empty()) return;
      auto& gx = grad_buffer(*x);
      for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t b = 0; b < inner; ++b) {
          const std::size_t base = a * len * inner + b;
          T dot = 0;
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t idx = base + i * inner;
            dot += o->grad[idx] * o->data[idx];
          }
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t idx = base + i * inner;
            gx[idx] += o->data[idx] * (o->grad[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps) {
  const auto [m, n] = matrix_dims(x, "layer_norm");
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: gamma " + shape_string(gamma.shape()) + " / beta " +
                         shape_string(beta.shape()) + " do not match " +
                         shape_string(x.shape()));
  }
  Tensor<T> out(x.shape());
  std::vector<T> normalized(m * n);
  std::vector<T> inv_std(m);
  auto o = out.mutable_data();
  const auto in = x.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = in.data() + i * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    const T rstd = T{1} / std::sqrt(var + eps);
    inv_std[i] = rstd;
    for (std::size_t j = 0; j < n; ++j) {
      const T xhat = (row[j] - mu) * rstd;
      normalized[i * n + j] = xhat;
      o[i * n + j] = xhat * g[j] + b[j];
    }
  }
  if (track(out, {&x, &gamma, &beta})) {
    Tape<T>::current().record([x = x.impl(), gm = gamma.impl(), bt = beta.impl(),
                               o = out.impl(), normalized = std::move(normalized),
                               inv_std = std::move(inv_std), m, n] {
      if (o->grad.empty()) return;
      const auto& dy = o->grad;
      if (gm->requires_grad) {
        auto& gg = grad_buffer(*gm);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gg[j] += dy[i * n + j] * normalized[i * n + j];
        }
      }
      if (bt->requires_grad) {
        auto& gb = grad_buffer(*bt);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gb[j] += dy[i * n + j];
        }
      }
      if (x->requires_grad) {
        auto& gx = grad_buffer(*x);
        const T inv_n = T{1} / static_cast<T>(n);
        for (std::size_t i = 0; i < m; ++i) {
          T mean_dxhat = 0;
          T mean_dxhat_xhat = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const T dxhat = dy[i * n + j] * gm->data[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * normalized[i * n + j];
          }
          mean_dxhat *= inv_n;
          mean_dxhat_xhat *= inv_n;
          for (std::size_t j = 0; j < n; ++j) {
            const T dxhat = dy[i * n + j] * gm->data[j];
            gx[i * n + j] += inv_std[i] * (dxhat - mean_dxhat -
                                           normalized[i * n + j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T c = static_cast<T>(kGeluSqrt2OverPi);
  constexpr T k = static_cast<T>(kGeluCubic);
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const T v = in[i];
    o[i] = T(0.5) * v * (T{1} + std::tanh(c * (v + k * v * v * v)));
  }
  if (track(out, {&x})) {
    Tape<T>::current().record([x = x.impl(), o = out.impl()] {
      if (o->grad.empty()) return;
      auto& gx = grad_buffer(*x);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const T v = x->data[i];
        const T t = std::tanh(c * (v + k * v * v * v));
        const T dt = (T{1} - t * t) * c * (T{1} + T{3} * k * v * v);
        gx[i] += o->grad[i] * (T(0.5) * (T{1} + t) + T(0.5) * v * dt);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label) {
  const auto [rows, classes] = matrix_dims(logits, "cross_entropy");
  if (rows != 1) {
    throw DimensionError("cross_entropy: expected a single row of logits, got " +
                         shape_string(logits.shape()));
  }
  if (label >= classes) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                     std::to_string(classes) + ")");
  }
  const auto z = logits.data();
  const T peak = *std::max_element(z.begin(), z.end());
  T total = 0;
  for (T v : z) total += std::exp(v - peak);
  const T log_sum = peak + std::log(total);
  Tensor<T> out = Tensor<T>::scalar(log_sum - z[label]);
  if (track(out, {&logits})) {
    Tape<T>::current().record([lg = logits.impl(), o = out.impl(), log_sum, label] {
      if (o->grad.empty()) return;
      auto& g = grad_buffer(*lg);
      const T upstream = o->grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T p = std::exp(lg->data[i] - log_sum);
        g[i] += upstream * (p - (i == label ? T{1} : T{0}));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  const auto [m, n] = matrix_dims(x, "slice_cols");
  if (count == 0 || start + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " +
                         shape_string(x.shape()));
  }
  Tensor<T> out(Shape{m, count});
  auto o = out.mutable_data();
  const auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(in.begin() + i * n + start, count, o.begin() + i * count);
  }
  if (track(out, {&x})) {
    Tape<T>::current().record([x = x.impl(), o = out.impl(), m, n, start, count] {
      if (o->grad.empty()) return;
      auto& gx = grad_buffer(*x);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < count; ++j) gx[i * n + start + j] += o->grad[i * count + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = matrix_dims(parts[0], "concat_cols").rows;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto dims = matrix_dims(p, "concat_cols");
    if (dims.rows != m) {
      throw DimensionError("concat_cols: row count mismatch " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    total += dims.cols;
  }
  Tensor<T> out(Shape{m, total});
  auto o = out.mutable_data();
  std::size_t offset = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    const std::size_t w = p.numel() / m;
    const auto in = p.data();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(in.begin() + i * w, w, o.begin() + i * total + offset);
    }
    offset += w;
    tracked = tracked || needs_grad(p);
  }
  if (tracked && grad_mode_enabled()) {
    out.impl()->requires_grad = true;
    out.impl()->leaf = false;
    std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
    impls.reserve(parts.size());
    for (const auto& p : parts) impls.push_back(p.impl());
    Tape<T>::current().record([impls = std::move(impls), o = out.impl(), m, total] {
      if (o->grad.empty()) return;
      std::size_t col = 0;
      for (const auto& p : impls) {
        const std::size_t w = p->data.size() / m;
        if (p->requires_grad) {
          auto& gp = grad_buffer(*p);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += o->grad[i * total + col + j];
          }
        }
        col += w;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& top, const Tensor<T>& bottom) {
  const auto [m1, n] = matrix_dims(top, "concat_rows");
  const auto [m2, n2] = matrix_dims(bottom, "concat_rows");
  if (n != n2) {
    throw DimensionError("concat_rows: column mismatch " + shape_string(top.shape()) +
                         " vs " + shape_string(bottom.shape()));
  }
  Tensor<T> out(Shape{m1 + m2, n});
  auto o = out.mutable_data();
  std::copy(top.data().begin(), top.data().end(), o.begin());
  std::copy(bottom.data().begin(), bottom.data().end(), o.begin() + m1 * n);
  if (track(out, {&top, &bottom})) {
    Tape<T>::current().record([t = top.impl(), b = bottom.impl(), o = out.impl(), m1, n] {
      if (o->grad.empty()) return;
      if (t->requires_grad) {
        auto& gt = grad_buffer(*t);
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += o->grad[i];
      }
      if (b->requires_grad) {
        auto& gb = grad_buffer(*b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o->grad[m1 * n + i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> select_row(const Tensor<T>& x, std::size_t index) {
  const auto [m, n] = matrix_dims(x, "select_row");
  if (index >= m) {
    throw IndexError("select_row: row " + std::to_string(index) + " outside " +
                     shape_string(x.shape()));
  }
  Tensor<T> out(Shape{1, n});
  std::copy_n(x.data().begin() + index * n, n, out.mutable_data().begin());
  if (track(out, {&x})) {
    Tape<T>::current().record([x = x.impl(), o = out.impl(), index, n] {
      if (o->grad.empty()) return;
      auto& gx = grad_buffer(*x);
      for (std::size_t j = 0; j < n; ++j) gx[index * n + j] += o->grad[j];
    });
  }
  return out;
}

#define CVIT_INSTANTIATE_OPS(T)                                                       \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> transpose(const Tensor<T>&);                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                      \
  template Tensor<T> sum(const Tensor<T>&);                                           \
  template Tensor<T> mean(const Tensor<T>&);                                          \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                T);                                                   \
  template Tensor<T> gelu(const Tensor<T>&);                                          \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::size_t);                    \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);          \
  template Tensor<T> concat_cols(std::span<const Tensor<T>>);                         \
  template Tensor<T> concat_rows(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> select_row(const Tensor<T>&, std::size_t);

CVIT_INSTANTIATE_OPS(float)
CVIT_INSTANTIATE_OPS(double)

#undef CVIT_INSTANTIATE_OPS

}  // namespace cvit
