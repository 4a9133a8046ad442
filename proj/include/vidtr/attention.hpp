#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vidtr/temporal_pool.hpp"
#include "vidtr/tensor.hpp"

namespace vidtr {

/// The attention factorizations: full spatio-temporal (WHT), separable
/// temporal-then-spatial (WH+T), axial T-then-W-then-H (W+H+T), and
/// per-frame spatial only (WH).
enum class Factorization { Joint, Separable, Axial, SpatialOnly };

std::string to_string(Factorization kind);
Factorization parse_factorization(const std::string& name);

template <class Real>
using NamedTensors = std::vector<std::pair<std::string, Tensor<Real>>>;

template <class Real>
struct LayerNormParams {
  Tensor<Real> gamma;
  Tensor<Real> beta;
};

/// One attention sublayer: q/k/v/output projections (with biases) plus the
/// norms applied before the attention and after the residual sum.
template <class Real>
struct AttentionParams {
  Tensor<Real> wq, bq, wk, bk, wv, bv, wo, bo;
  LayerNormParams<Real> pre, post;
};

template <class Real>
struct FeedForwardParams {
  Tensor<Real> w1, b1, w2, b2;
  LayerNormParams<Real> pre, post;
};

/// Attention sublayers in application order: joint and spatial-only have
/// one, separable has {temporal, spatial}, axial has {temporal, w, h}.
template <class Real>
struct EncoderLayerParams {
  Factorization kind = Factorization::Separable;
  std::vector<AttentionParams<Real>> attention;
  FeedForwardParams<Real> ffn;
  Tensor<Real> pool_kernel;  // 3 taps, only with conv1d pooling

  void collect(const std::string& prefix, NamedTensors<Real>& out) const;
};

std::vector<std::string> attention_axis_names(Factorization kind);

template <class Real>
AttentionParams<Real> init_attention_params(std::size_t width,
                                            std::mt19937_64& rng);
template <class Real>
FeedForwardParams<Real> init_feed_forward_params(std::size_t width,
                                                 std::size_t hidden,
                                                 std::mt19937_64& rng);
/// Linear weights from N(0, 1/fan_in), zero biases, unit norms. A conv1d
/// pooling kernel starts at [0.25, 0.5, 0.25].
template <class Real>
EncoderLayerParams<Real> init_encoder_layer(Factorization kind,
                                            std::size_t width,
                                            std::size_t hidden,
                                            bool with_pool_kernel,
                                            std::mt19937_64& rng);

/// softmax(q_h k_h^T / sqrt(C/H)) for every sequence n and head h.
/// q [N x Lq x C], k [N x Lk x C] -> [N x H x Lq x Lk].
template <class Real>
Tensor<Real> attention_scores(const Tensor<Real>& q, const Tensor<Real>& k,
                              std::size_t heads);

/// Per-head affinity times values, heads concatenated along channels.
/// affinity [N x H x Lq x Lk], v [N x Lk x C] -> [N x Lq x C].
template <class Real>
Tensor<Real> attention_apply(const Tensor<Real>& affinity,
                             const Tensor<Real>& v);

template <class Real>
struct AttentionResult {
  Tensor<Real> out;       // [N x L' x C]
  Tensor<Real> affinity;  // [N x H x L' x L], after pooling
  PoolPlan<Real> plan;
};

/// Multi-head self-attention over N independent sequences [N x L x C] (or
/// a single [L x C] sequence). Optional temporal pooling is applied to the
/// affinity rows before they multiply the values.
template <class Real>
AttentionResult<Real> multi_head_attention(const Tensor<Real>& seqs,
                                           const AttentionParams<Real>& params,
                                           std::size_t heads,
                                           const PoolSpec& pool = {},
                                           const Tensor<Real>& pool_kernel = {});

/// post_norm(pool(x) + MHA(pre_norm(x))). Writes the affinity if asked.
template <class Real>
Tensor<Real> attention_sublayer(const Tensor<Real>& seqs,
                                const AttentionParams<Real>& params,
                                std::size_t heads, const PoolSpec& pool,
                                const Tensor<Real>& pool_kernel,
                                Tensor<Real>* affinity);

/// post_norm(x + W2 gelu(W1 pre_norm(x))).
template <class Real>
Tensor<Real> feed_forward_sublayer(const Tensor<Real>& x,
                                   const FeedForwardParams<Real>& params);

/// Detached affinities of one encoder layer. Leading axis is the batch;
/// H is the head count.
template <class Real>
struct AttentionMaps {
  Tensor<Real> temporal;  // [B x H x S x (tau+1) x (T+1)], S = spatial lines
  Tensor<Real> spatial;   // [B x H x (tau+1) x (P+1) x (P+1)]; spatial-only:
                          // [B x H x T x (P+1) x (P+1)]
  Tensor<Real> joint;     // [B x H x L x L]
  Tensor<Real> axial_w;   // [B x H x lines x (Wp+1) x (Wp+1)]
  Tensor<Real> axial_h;   // [B x H x lines x (Hp+1) x (Hp+1)]
};

template <class Real>
struct GridResult {
  Tensor<Real> tokens;
  Tensor<Real> maps;  // [B x H x lines x L' x L]
};

/// Temporal MSA over each spatial index of grid [B x (T+1) x (P+1) x C];
/// one parameter set shared by all spatial indices. No norm or residual.
template <class Real>
GridResult<Real> temporal_attention(const Tensor<Real>& grid,
                                    const AttentionParams<Real>& params,
                                    std::size_t heads, const PoolSpec& pool = {},
                                    const Tensor<Real>& pool_kernel = {});

/// Spatial MSA over each temporal index of the grid. No norm or residual.
template <class Real>
GridResult<Real> spatial_attention(const Tensor<Real>& grid,
                                   const AttentionParams<Real>& params,
                                   std::size_t heads);

/// MSA_s(MSA_t(.)) with norms and residuals, then the feed-forward block.
/// grid [B x (T+1) x (P+1) x C] -> [B x (tau+1) x (P+1) x C].
template <class Real>
Tensor<Real> separable_encoder_layer(const Tensor<Real>& grid,
                                     const EncoderLayerParams<Real>& params,
                                     std::size_t heads, const PoolSpec& pool,
                                     AttentionMaps<Real>* maps = nullptr);

/// Standard encoder layer over flat sequences [B x L x C].
template <class Real>
Tensor<Real> joint_encoder_layer(const Tensor<Real>& seq,
                                 const EncoderLayerParams<Real>& params,
                                 std::size_t heads,
                                 AttentionMaps<Real>* maps = nullptr);

/// Attention along T, then W, then H of [B x (T+1) x (Wp+1) x (Hp+1) x C].
template <class Real>
Tensor<Real> axial_encoder_layer(const Tensor<Real>& grid,
                                 const EncoderLayerParams<Real>& params,
                                 std::size_t heads, const PoolSpec& pool,
                                 AttentionMaps<Real>* maps = nullptr);

/// Independent per-frame layers over [B x T x (P+1) x C], shared parameters.
template <class Real>
Tensor<Real> spatial_only_layer(const Tensor<Real>& frames,
                                const EncoderLayerParams<Real>& params,
                                std::size_t heads,
                                AttentionMaps<Real>* maps = nullptr);

}  // namespace vidtr
