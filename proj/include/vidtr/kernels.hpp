#pragma once

#include <cstddef>
#include <span>

// Raw numeric kernels behind the tensor ops. Each kernel exists twice: a
// plain serial reference and an OpenMP version. Both compute every output
// element with the same operation order, so they agree bit-for-bit when built
// with the same flags; the parallel one only distributes independent rows
// across threads.

namespace vidtr::kernels {

/// Row-major C[m x n] (+)= op(A) * op(B), where op(A) is m x k and op(B) is
/// k x n. With trans_a, A is stored k x m; with trans_b, B is stored n x k.
struct GemmDims {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool trans_a = false;
  bool trans_b = false;
};

namespace serial {

template <class Real>
void gemm(const GemmDims& d, std::span<const Real> a, std::span<const Real> b,
          std::span<Real> c, bool accumulate);

template <class Real>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const Real> in,
                  std::span<Real> out);

/// Normalizes each row; writes per-row mean and 1/sqrt(var + eps).
template <class Real>
void layer_norm_rows(std::size_t rows, std::size_t cols,
                     std::span<const Real> x, std::span<const Real> gamma,
                     std::span<const Real> beta, Real eps, std::span<Real> y,
                     std::span<Real> mean, std::span<Real> rstd);

template <class Real>
void gelu(std::span<const Real> x, std::span<Real> y);

}  // namespace serial

namespace parallel {

template <class Real>
void gemm(const GemmDims& d, std::span<const Real> a, std::span<const Real> b,
          std::span<Real> c, bool accumulate);

template <class Real>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const Real> in,
                  std::span<Real> out);

template <class Real>
void layer_norm_rows(std::size_t rows, std::size_t cols,
                     std::span<const Real> x, std::span<const Real> gamma,
                     std::span<const Real> beta, Real eps, std::span<Real> y,
                     std::span<Real> mean, std::span<Real> rstd);

template <class Real>
void gelu(std::span<const Real> x, std::span<Real> y);

}  // namespace parallel

/// tanh-approximation GELU and its derivative, shared by both kernel sets.
template <class Real>
Real gelu_scalar(Real x);
template <class Real>
Real gelu_derivative(Real x);

}  // namespace vidtr::kernels
