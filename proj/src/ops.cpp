#include "vidtr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vidtr/kernels.hpp"

namespace vidtr {

namespace kp = kernels::parallel;

namespace {

template <class Real>
using NodeOf = detail::Node<Real>;

template <class Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b,
                        const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// Maps every output flat index of a permutation to its input flat index.
std::vector<std::size_t> permutation_map(const Shape& in_shape,
                                         const std::vector<std::size_t>& axes) {
  const std::size_t rank = in_shape.size();
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];
  const auto in_strides = strides_of(in_shape);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) step[i] = in_strides[axes[i]];

  const std::size_t total = shape_size(in_shape);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t dst = 0; dst < total; ++dst) {
    map[dst] = src;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++counter[ax] < out_shape[ax]) {
        src += step[ax];
        break;
      }
      src -= step[ax] * (out_shape[ax] - 1);
      counter[ax] = 0;
    }
  }
  return map;
}

}  // namespace

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) +
                         " as " + shape_string(shape));
  std::vector<Real> v(x.values().begin(), x.values().end());
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op(std::move(shape), std::move(v), {x},
                               [xn](NodeOf<Real>& self) {
                                 accumulate_grad<Real>(*xn, self.grad);
                               });
}

template <class Real>
Tensor<Real> permute(const Tensor<Real>& x,
                     const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  if (axes.size() != rank)
    throw DimensionError("permute: axis list rank mismatch for " +
                         shape_string(x.shape()));
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a])
      throw DimensionError("permute: invalid axis list");
    seen[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.shape()[axes[i]];
  auto map = permutation_map(x.shape(), axes);
  std::vector<Real> v(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[map[i]];
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op(
      std::move(out_shape), std::move(v), {x},
      [xn, map = std::move(map)](NodeOf<Real>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += self.grad[i];
      });
}

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> v(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return Tensor<Real>::from_op(a.shape(), std::move(v), {a, b},
                               [an, bn](NodeOf<Real>& self) {
                                 accumulate_grad<Real>(*an, self.grad);
                                 accumulate_grad<Real>(*bn, self.grad);
                               });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "sub");
  std::vector<Real> v(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return Tensor<Real>::from_op(a.shape(), std::move(v), {a, b},
                               [an, bn](NodeOf<Real>& self) {
                                 accumulate_grad<Real>(*an, self.grad);
                                 if (!bn->requires_grad) return;
                                 auto& g = bn->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] -= self.grad[i];
                               });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> v(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return Tensor<Real>::from_op(a.shape(), std::move(v), {a, b},
                               [an, bn](NodeOf<Real>& self) {
                                 if (an->requires_grad) {
                                   auto& g = an->grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                     g[i] += self.grad[i] * bn->value[i];
                                 }
                                 if (bn->requires_grad) {
                                   auto& g = bn->grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                     g[i] += self.grad[i] * an->value[i];
                                 }
                               });
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor) {
  std::vector<Real> v(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] * factor;
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op(x.shape(), std::move(v), {x},
                               [xn, factor](NodeOf<Real>& self) {
                                 if (!xn->requires_grad) return;
                                 auto& g = xn->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += self.grad[i] * factor;
                               });
}

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) +
                         " by " + shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> v(m * n);
  kp::gemm<Real>({m, n, k, false, false}, a.values(), b.values(), v, false);
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return Tensor<Real>::from_op(
      {m, n}, std::move(v), {a, b}, [an, bn, m, n, k](NodeOf<Real>& self) {
        if (an->requires_grad)
          kp::gemm<Real>({m, k, n, false, true}, self.grad, bn->value,
                         an->grad_buffer(), true);
        if (bn->requires_grad)
          kp::gemm<Real>({k, n, m, true, false}, an->value, self.grad,
                         bn->grad_buffer(), true);
      });
}

template <class Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& b) {
  if (w.rank() != 2 || x.rank() == 0 || x.shape().back() != w.dim(0))
    throw DimensionError("linear: input " + shape_string(x.shape()) +
                         " does not conform to weight " +
                         shape_string(w.shape()));
  const std::size_t in = w.dim(0), out = w.dim(1);
  const std::size_t rows = x.size() / in;
  const bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.dim(0) != out))
    throw DimensionError("linear: bias " + shape_string(b.shape()) +
                         " does not match output width " + std::to_string(out));
  std::vector<Real> v(rows * out);
  if (has_bias) {
    auto bv = b.values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bv.begin(), bv.end(), v.begin() + r * out);
  }
  kp::gemm<Real>({rows, out, in, false, false}, x.values(), w.values(), v,
                 has_bias);
  Shape shape = x.shape();
  shape.back() = out;
  auto xn = x.node_ptr();
  auto wn = w.node_ptr();
  auto bn = has_bias ? b.node_ptr() : nullptr;
  std::vector<Tensor<Real>> parents{x, w};
  if (has_bias) parents.push_back(b);
  return Tensor<Real>::from_op(
      std::move(shape), std::move(v), std::move(parents),
      [xn, wn, bn, rows, in, out](NodeOf<Real>& self) {
        if (xn->requires_grad)
          kp::gemm<Real>({rows, in, out, false, true}, self.grad, wn->value,
                         xn->grad_buffer(), true);
        if (wn->requires_grad)
          kp::gemm<Real>({in, out, rows, true, false}, xn->value, self.grad,
                         wn->grad_buffer(), true);
        if (bn && bn->requires_grad) {
          auto& g = bn->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < out; ++j) g[j] += self.grad[r * out + j];
        }
      });
}

template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& x) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  std::vector<Real> v(x.size());
  kp::softmax_rows<Real>(rows, cols, x.values(), v);
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op(
      x.shape(), std::move(v), {x}, [xn, rows, cols](NodeOf<Real>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          const Real* y = self.value.data() + r * cols;
          const Real* dy = self.grad.data() + r * cols;
          Real dot = 0;
          for (std::size_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
          for (std::size_t j = 0; j < cols; ++j)
            g[r * cols + j] += y[j] * (dy[j] - dot);
        }
      });
}

template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                        const Tensor<Real>& beta, Real eps) {
  const std::size_t cols = gamma.size();
  if (x.shape().back() != cols || beta.size() != cols)
    throw DimensionError("layer_norm: input " + shape_string(x.shape()) +
                         " does not match affine width " +
                         std::to_string(cols));
  if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be > 0");
  const std::size_t rows = x.size() / cols;
  std::vector<Real> v(x.size()), mean(rows), rstd(rows);
  kp::layer_norm_rows<Real>(rows, cols, x.values(), gamma.values(),
                            beta.values(), eps, v, mean, rstd);
  auto xn = x.node_ptr();
  auto gn = gamma.node_ptr();
  auto bn = beta.node_ptr();
  return Tensor<Real>::from_op(
      x.shape(), std::move(v), {x, gamma, beta},
      [xn, gn, bn, rows, cols, mean = std::move(mean),
       rstd = std::move(rstd)](NodeOf<Real>& self) {
        std::vector<Real> xhat(cols), dxhat(cols);
        Real* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        Real* gg = gn->requires_grad ? gn->grad_buffer().data() : nullptr;
        Real* gb = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
        const Real inv_n = Real(1) / static_cast<Real>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const Real* xr = xn->value.data() + r * cols;
          const Real* dy = self.grad.data() + r * cols;
          Real mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < cols; ++j) {
            xhat[j] = (xr[j] - mean[r]) * rstd[r];
            dxhat[j] = dy[j] * gn->value[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[j];
            if (gg) gg[j] += dy[j] * xhat[j];
            if (gb) gb[j] += dy[j];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          if (gx)
            for (std::size_t j = 0; j < cols; ++j)
              gx[r * cols + j] +=
                  rstd[r] * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
      });
}

template <class Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  std::vector<Real> v(x.size());
  kp::gelu<Real>(x.values(), v);
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op(x.shape(), std::move(v), {x},
                               [xn](NodeOf<Real>& self) {
                                 if (!xn->requires_grad) return;
                                 auto& g = xn->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += self.grad[i] *
                                           kernels::gelu_derivative(xn->value[i]);
                               });
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  auto xv = x.values();
  Real s = std::accumulate(xv.begin(), xv.end(), Real(0));
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op({1}, {s}, {x}, [xn](NodeOf<Real>& self) {
    if (!xn->requires_grad) return;
    auto& g = xn->grad_buffer();
    for (auto& gi : g) gi += self.grad[0];
  });
}

template <class Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, std::size_t axis) {
  if (axis >= x.rank())
    throw DimensionError("mean_axis: axis out of range for " +
                         shape_string(x.shape()));
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<Real> v(outer * inner, Real(0));
  auto xv = x.values();
  const Real inv = Real(1) / static_cast<Real>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t i = 0; i < inner; ++i)
        v[o * inner + i] += xv[(o * n + a) * inner + i];
    for (std::size_t i = 0; i < inner; ++i) v[o * inner + i] *= inv;
  }
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op(
      std::move(out_shape), std::move(v), {x},
      [xn, outer, inner, n, inv](NodeOf<Real>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t a = 0; a < n; ++a)
            for (std::size_t i = 0; i < inner; ++i)
              g[(o * n + a) * inner + i] += self.grad[o * inner + i] * inv;
      });
}

template <class Real>
Tensor<Real> take_rows(const Tensor<Real>& x,
                       std::span<const std::size_t> indices, std::size_t k) {
  if (x.rank() != 4)
    throw DimensionError("take_rows: expected [N x M x L x D], got " +
                         shape_string(x.shape()));
  const std::size_t N = x.dim(0), M = x.dim(1), L = x.dim(2), D = x.dim(3);
  if (indices.size() != N * k)
    throw DimensionError("take_rows: expected " + std::to_string(N * k) +
                         " indices, got " + std::to_string(indices.size()));
  for (auto i : indices)
    if (i >= L) throw DimensionError("take_rows: row index out of range");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<Real> v(N * M * k * D);
  auto xv = x.values();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t r = 0; r < k; ++r) {
        const Real* src = xv.data() + ((n * M + m) * L + idx[n * k + r]) * D;
        std::copy(src, src + D, v.begin() + ((n * M + m) * k + r) * D);
      }
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op(
      {N, M, k, D}, std::move(v), {x},
      [xn, idx = std::move(idx), N, M, L, D, k](NodeOf<Real>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t m = 0; m < M; ++m)
            for (std::size_t r = 0; r < k; ++r) {
              Real* dst = g.data() + ((n * M + m) * L + idx[n * k + r]) * D;
              const Real* src = self.grad.data() + ((n * M + m) * k + r) * D;
              for (std::size_t d = 0; d < D; ++d) dst[d] += src[d];
            }
      });
}

template <class Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits,
                           std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw DimensionError("cross_entropy: logits " +
                         shape_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<Real> prob(B * K);
  kp::softmax_rows<Real>(B, K, logits.values(), prob);
  Real loss = 0;
  auto lv = logits.values();
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw DimensionError("cross_entropy: label out of range");
    const Real* row = lv.data() + b * K;
    Real mx = *std::max_element(row, row + K);
    Real s = 0;
    for (std::size_t j = 0; j < K; ++j) s += std::exp(row[j] - mx);
    loss += mx + std::log(s) - row[y];
  }
  loss /= static_cast<Real>(B);
  std::vector<int> lab(labels.begin(), labels.end());
  auto ln = logits.node_ptr();
  return Tensor<Real>::from_op(
      {1}, {loss}, {logits},
      [ln, prob = std::move(prob), lab = std::move(lab), B,
       K](NodeOf<Real>& self) {
        if (!ln->requires_grad) return;
        auto& g = ln->grad_buffer();
        const Real f = self.grad[0] / static_cast<Real>(B);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t j = 0; j < K; ++j)
            g[b * K + j] +=
                f * (prob[b * K + j] -
                     (static_cast<int>(j) == lab[b] ? Real(1) : Real(0)));
      });
}

template <class Real>
std::vector<Real> probabilities(const Tensor<Real>& logits) {
  const std::size_t cols = logits.shape().back();
  std::vector<Real> p(logits.size());
  kp::softmax_rows<Real>(logits.size() / cols, cols, logits.values(), p);
  return p;
}

#define VIDTR_INSTANTIATE_OPS(Real)                                            \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape);                   \
  template Tensor<Real> permute(const Tensor<Real>&,                           \
                                const std::vector<std::size_t>&);              \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);         \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);         \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);         \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                      \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);      \
  template Tensor<Real> linear(const Tensor<Real>&, const Tensor<Real>&,       \
                               const Tensor<Real>&);                           \
  template Tensor<Real> softmax_rows(const Tensor<Real>&);                     \
  template Tensor<Real> layer_norm(const Tensor<Real>&, const Tensor<Real>&,   \
                                   const Tensor<Real>&, Real);                 \
  template Tensor<Real> gelu(const Tensor<Real>&);                             \
  template Tensor<Real> sum(const Tensor<Real>&);                              \
  template Tensor<Real> mean_axis(const Tensor<Real>&, std::size_t);           \
  template Tensor<Real> take_rows(const Tensor<Real>&,                         \
                                  std::span<const std::size_t>, std::size_t);  \
  template Tensor<Real> cross_entropy(const Tensor<Real>&,                     \
                                      std::span<const int>);                   \
  template std::vector<Real> probabilities(const Tensor<Real>&);

VIDTR_INSTANTIATE_OPS(float)
VIDTR_INSTANTIATE_OPS(double)

#undef VIDTR_INSTANTIATE_OPS

}  // namespace vidtr
