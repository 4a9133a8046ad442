#include "vidtr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace vidtr::kernels {

namespace {

// Below this many multiply-adds the thread fan-out costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

template <class Real>
std::vector<Real> transposed(std::span<const Real> b, std::size_t rows,
                             std::size_t cols) {
  std::vector<Real> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = b[r * cols + c];
  return t;
}

template <class Real>
inline void gemm_row(const GemmDims& d, const Real* a, const Real* b, Real* c,
                     std::size_t i) {
  Real* crow = c + i * d.n;
  for (std::size_t p = 0; p < d.k; ++p) {
    const Real aip = d.trans_a ? a[p * d.m + i] : a[i * d.k + p];
    const Real* brow = b + p * d.n;
    for (std::size_t j = 0; j < d.n; ++j) crow[j] += aip * brow[j];
  }
}

template <class Real>
inline void softmax_row(std::size_t cols, const Real* in, Real* out) {
  Real mx = in[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
  Real sum = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  const Real inv = Real(1) / sum;
  for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
}

template <class Real>
inline void layer_norm_row(std::size_t cols, const Real* x, const Real* gamma,
                           const Real* beta, Real eps, Real* y, Real* mean,
                           Real* rstd) {
  Real mu = 0;
  for (std::size_t j = 0; j < cols; ++j) mu += x[j];
  mu /= static_cast<Real>(cols);
  Real var = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    const Real dx = x[j] - mu;
    var += dx * dx;
  }
  var /= static_cast<Real>(cols);
  const Real r = Real(1) / std::sqrt(var + eps);
  for (std::size_t j = 0; j < cols; ++j)
    y[j] = (x[j] - mu) * r * gamma[j] + beta[j];
  *mean = mu;
  *rstd = r;
}

}  // namespace

template <class Real>
Real gelu_scalar(Real x) {
  constexpr Real kAlpha = Real(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real kCubic = Real(0.044715);
  const Real inner = kAlpha * (x + kCubic * x * x * x);
  return Real(0.5) * x * (Real(1) + std::tanh(inner));
}

template <class Real>
Real gelu_derivative(Real x) {
  constexpr Real kAlpha = Real(0.7978845608028654);
  constexpr Real kCubic = Real(0.044715);
  const Real inner = kAlpha * (x + kCubic * x * x * x);
  const Real th = std::tanh(inner);
  const Real dinner = kAlpha * (Real(1) + Real(3) * kCubic * x * x);
  return Real(0.5) * (Real(1) + th) + Real(0.5) * x * (Real(1) - th * th) * dinner;
}

namespace serial {

template <class Real>
void gemm(const GemmDims& d, std::span<const Real> a, std::span<const Real> b,
          std::span<Real> c, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), Real(0));
  std::vector<Real> bt;
  const Real* bp = b.data();
  if (d.trans_b) {
    bt = transposed(b, d.n, d.k);
    bp = bt.data();
  }
  for (std::size_t i = 0; i < d.m; ++i) gemm_row(d, a.data(), bp, c.data(), i);
}

template <class Real>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const Real> in,
                  std::span<Real> out) {
  for (std::size_t r = 0; r < rows; ++r)
    softmax_row(cols, in.data() + r * cols, out.data() + r * cols);
}

template <class Real>
void layer_norm_rows(std::size_t rows, std::size_t cols,
                     std::span<const Real> x, std::span<const Real> gamma,
                     std::span<const Real> beta, Real eps, std::span<Real> y,
                     std::span<Real> mean, std::span<Real> rstd) {
  for (std::size_t r = 0; r < rows; ++r)
    layer_norm_row(cols, x.data() + r * cols, gamma.data(), beta.data(), eps,
                   y.data() + r * cols, mean.data() + r, rstd.data() + r);
}

template <class Real>
void gelu(std::span<const Real> x, std::span<Real> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_scalar(x[i]);
}

}  // namespace serial

namespace parallel {

template <class Real>
void gemm(const GemmDims& d, std::span<const Real> a, std::span<const Real> b,
          std::span<Real> c, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), Real(0));
  std::vector<Real> bt;
  const Real* bp = b.data();
  if (d.trans_b) {
    bt = transposed(b, d.n, d.k);
    bp = bt.data();
  }
  const auto m = static_cast<long>(d.m);
  const bool fan_out = d.m * d.n * d.k >= kParallelWork;
#pragma omp parallel for schedule(static) if (fan_out)
  for (long i = 0; i < m; ++i)
    gemm_row(d, a.data(), bp, c.data(), static_cast<std::size_t>(i));
}

template <class Real>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const Real> in,
                  std::span<Real> out) {
  const auto n = static_cast<long>(rows);
  const bool fan_out = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (fan_out)
  for (long r = 0; r < n; ++r)
    softmax_row(cols, in.data() + r * cols, out.data() + r * cols);
}

template <class Real>
void layer_norm_rows(std::size_t rows, std::size_t cols,
                     std::span<const Real> x, std::span<const Real> gamma,
                     std::span<const Real> beta, Real eps, std::span<Real> y,
                     std::span<Real> mean, std::span<Real> rstd) {
  const auto n = static_cast<long>(rows);
  const bool fan_out = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (fan_out)
  for (long r = 0; r < n; ++r)
    layer_norm_row(cols, x.data() + r * cols, gamma.data(), beta.data(), eps,
                   y.data() + r * cols, mean.data() + r, rstd.data() + r);
}

template <class Real>
void gelu(std::span<const Real> x, std::span<Real> y) {
  const auto n = static_cast<long>(x.size());
  const bool fan_out = x.size() >= kParallelWork;
#pragma omp parallel for schedule(static) if (fan_out)
  for (long i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

}  // namespace parallel

#define VIDTR_INSTANTIATE_KERNELS(Real)                                        \
  template Real gelu_scalar<Real>(Real);                                       \
  template Real gelu_derivative<Real>(Real);                                   \
  template void serial::gemm<Real>(const GemmDims&, std::span<const Real>,     \
                                   std::span<const Real>, std::span<Real>,     \
                                   bool);                                      \
  template void serial::softmax_rows<Real>(std::size_t, std::size_t,           \
                                           std::span<const Real>,              \
                                           std::span<Real>);                   \
  template void serial::layer_norm_rows<Real>(                                 \
      std::size_t, std::size_t, std::span<const Real>, std::span<const Real>,  \
      std::span<const Real>, Real, std::span<Real>, std::span<Real>,           \
      std::span<Real>);                                                        \
  template void serial::gelu<Real>(std::span<const Real>, std::span<Real>);    \
  template void parallel::gemm<Real>(const GemmDims&, std::span<const Real>,   \
                                     std::span<const Real>, std::span<Real>,   \
                                     bool);                                    \
  template void parallel::softmax_rows<Real>(std::size_t, std::size_t,         \
                                             std::span<const Real>,            \
                                             std::span<Real>);                 \
  template void parallel::layer_norm_rows<Real>(                               \
      std::size_t, std::size_t, std::span<const Real>, std::span<const Real>,  \
      std::span<const Real>, Real, std::span<Real>, std::span<Real>,           \
      std::span<Real>);                                                        \
  template void parallel::gelu<Real>(std::span<const Real>, std::span<Real>);

VIDTR_INSTANTIATE_KERNELS(float)
VIDTR_INSTANTIATE_KERNELS(double)

#undef VIDTR_INSTANTIATE_KERNELS

}  // namespace vidtr::kernels
