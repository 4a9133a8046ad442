#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vidtr/tensor.hpp"

// Temporal down-sampling of affinity rows: stride-2 average pooling, a
// learned stride-2 1-D convolution, and top-k selection by row standard
// deviation. Row 0 (the class row) is never pooled away.

namespace vidtr {

enum class PoolKind { None, Avg, Conv1d, TopkStd };

std::string to_string(PoolKind kind);
PoolKind parse_pool_kind(const std::string& name);

struct PoolSpec {
  PoolKind kind = PoolKind::None;
  std::size_t target_tau = 0;
};

/// Per-row statistics over the non-class rows 1..T of a (T+1) x (T+1)
/// affinity matrix.
template <class Real>
struct RowStats {
  Tensor<Real> mu;     // [T]
  Tensor<Real> sigma;  // [T]
};

/// mu(i) is the mean of row i over all T+1 columns;
/// sigma(i) = (1/T) * sqrt(sum_j (attn(i,j) - mu(i))^2).
template <class Real>
RowStats<Real> row_mean_std(const Tensor<Real>& attn);

/// Full-matrix indices of the rows kept by top-k std pooling: 0 followed by
/// the tau non-class rows with the largest sigma (ties to the lower index),
/// in ascending order. `sigma` holds rows 1..T.
std::vector<std::size_t> topk_std_rows(std::span<const double> sigma,
                                       std::size_t tau);

/// [(tau+1) x (T+1)]; requires 1 <= tau < T.
template <class Real>
Tensor<Real> pool_topk_std(const Tensor<Real>& attn, std::size_t tau);

/// Stride-2 pair averaging of the non-class rows; odd tail row passes
/// through. [(ceil(T/2)+1) x (T+1)].
template <class Real>
Tensor<Real> pool_avg(const Tensor<Real>& attn);

/// Stride-2, zero-padded, 3-tap convolution over non-class rows, outputs
/// clamped at 1e-8 and re-normalized to sum 1; class row verbatim.
template <class Real>
Tensor<Real> pool_conv1d(const Tensor<Real>& attn, const Tensor<Real>& kernel);

/// Row count after a stride-2 pool of an L-row stack (class row included).
std::size_t stride2_rows(std::size_t rows);

inline constexpr double kConvRenormFloor = 1e-8;

// Differentiable batched primitives over [R x L x D] stacks.
template <class Real>
Tensor<Real> avg_rows(const Tensor<Real>& x);
template <class Real>
Tensor<Real> conv_rows(const Tensor<Real>& x, const Tensor<Real>& kernel);
/// max(x, floor) / row-sum over the last axis for rows 1.. of every matrix;
/// row 0 passes through.
template <class Real>
Tensor<Real> clamp_renormalize_rows(const Tensor<Real>& x, Real floor);

/// The pooling operator realized for one batch of temporal affinities. The
/// same operator is applied to the affinity stack and to the residual token
/// rows, so both come out with tau+1 rows.
template <class Real>
class PoolPlan {
 public:
  PoolPlan() = default;

  /// `affinity` is [N x H x L x L]. For top-k, rows are ranked on the
  /// head-averaged affinity of each sequence so every head keeps the same
  /// frames. tau == L-1 with top-k keeps every row in order.
  static PoolPlan make(const PoolSpec& spec, const Tensor<Real>& affinity,
                       const Tensor<Real>& conv_kernel);

  PoolKind kind() const { return kind_; }
  std::size_t output_rows() const { return rows_; }
  /// Kept rows per sequence for top-k ([N x (tau+1)] flattened).
  const std::vector<std::size_t>& selected() const { return selected_; }

  /// [N x H x L x L] -> [N x H x rows x L]
  Tensor<Real> pool_affinity(const Tensor<Real>& affinity) const;
  /// [N x L x D] -> [N x rows x D]
  Tensor<Real> pool_rows(const Tensor<Real>& x) const;

 private:
  PoolKind kind_ = PoolKind::None;
  std::size_t rows_ = 0;
  std::vector<std::size_t> selected_;
  Tensor<Real> kernel_;
};

extern template class PoolPlan<float>;
extern template class PoolPlan<double>;

}  // namespace vidtr
