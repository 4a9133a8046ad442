#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vidtr/tensor.hpp"

// Differentiable operations over Tensor. Every op records its backward
// closure on the tape when grad mode is on and an input requires grad.

namespace vidtr {

inline constexpr double kLayerNormEps = 1e-5;

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);

/// Output axis i is input axis axes[i].
template <class Real>
Tensor<Real> permute(const Tensor<Real>& x, const std::vector<std::size_t>& axes);

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor);

/// Plain 2-D product a[m x k] * b[k x n].
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

/// Affine map over the last axis: x[.. x in] * w[in x out] + b[out].
/// `b` may be undefined for a bias-free map.
template <class Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& b);

/// Softmax over the last axis with row-max subtraction.
template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& x);

template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                        const Tensor<Real>& beta,
                        Real eps = static_cast<Real>(kLayerNormEps));

template <class Real>
Tensor<Real> gelu(const Tensor<Real>& x);

/// Sum of all entries, shape [1].
template <class Real>
Tensor<Real> sum(const Tensor<Real>& x);

/// Mean over one axis; that axis is removed from the shape.
template <class Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, std::size_t axis);

/// x is [N x M x L x D]. For each n, gathers the k rows listed in
/// indices[n*k .. n*k+k) from every one of the M inner matrices, giving
/// [N x M x k x D]. Used for row selection of affinity stacks and tokens.
template <class Real>
Tensor<Real> take_rows(const Tensor<Real>& x,
                       std::span<const std::size_t> indices, std::size_t k);

/// Mean softmax cross-entropy of logits [B x K] against integer labels.
template <class Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits,
                           std::span<const int> labels);

/// Row-wise softmax probabilities of a [B x K] tensor, no tape.
template <class Real>
std::vector<Real> probabilities(const Tensor<Real>& logits);

}  // namespace vidtr
