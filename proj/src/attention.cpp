#include "vidtr/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vidtr/ops.hpp"

namespace vidtr {

namespace {

template <class Real>
using NodeOf = detail::Node<Real>;

constexpr std::size_t kParallelSequences = 4;

template <class Real>
Tensor<Real> gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<Real> t(std::move(shape), true);
  for (auto& v : t.mutable_values()) v = static_cast<Real>(dist(rng));
  return t;
}

template <class Real>
Tensor<Real> zeros(Shape shape) {
  return Tensor<Real>(std::move(shape), true);
}

template <class Real>
LayerNormParams<Real> unit_norm(std::size_t width) {
  Tensor<Real> gamma = Tensor<Real>::full({width}, Real(1));
  gamma.set_requires_grad(true);
  return {gamma, zeros<Real>({width})};
}

template <class Real>
void collect_norm(const std::string& prefix, const LayerNormParams<Real>& p,
                  NamedTensors<Real>& out) {
  out.emplace_back(prefix + ".gamma", p.gamma);
  out.emplace_back(prefix + ".beta", p.beta);
}

template <class Real>
Tensor<Real> norm(const Tensor<Real>& x, const LayerNormParams<Real>& p) {
  return layer_norm(x, p.gamma, p.beta);
}

// Affinity [N x H x L' x L] of S lines per batch element, as
// [B x H x S x L' x L] with no tape.
template <class Real>
Tensor<Real> lines_to_maps(const Tensor<Real>& affinity, std::size_t batch) {
  NoGradGuard guard;
  const std::size_t N = affinity.dim(0), H = affinity.dim(1),
                    Lq = affinity.dim(2), Lk = affinity.dim(3);
  const std::size_t S = N / batch;
  auto a = reshape(affinity.detach(), {batch, S, H, Lq, Lk});
  return permute(a, {0, 2, 1, 3, 4});
}

template <class Real>
std::size_t head_dim(std::size_t channels, std::size_t heads) {
  if (heads == 0 || channels % heads != 0)
    throw DimensionError("attention: " + std::to_string(channels) +
                         " channels do not split into " +
                         std::to_string(heads) + " heads");
  return channels / heads;
}

}  // namespace

std::string to_string(Factorization kind) {
  switch (kind) {
    case Factorization::Joint:
      return "joint";
    case Factorization::Separable:
      return "separable";
    case Factorization::Axial:
      return "axial";
    case Factorization::SpatialOnly:
      return "spatial_only";
  }
  return "?";
}

Factorization parse_factorization(const std::string& name) {
  if (name == "joint") return Factorization::Joint;
  if (name == "separable") return Factorization::Separable;
  if (name == "axial") return Factorization::Axial;
  if (name == "spatial_only") return Factorization::SpatialOnly;
  throw ConfigError("unknown attention factorization '" + name +
                    "' (joint|separable|axial|spatial_only)");
}

std::vector<std::string> attention_axis_names(Factorization kind) {
  switch (kind) {
    case Factorization::Joint:
      return {"joint"};
    case Factorization::Separable:
      return {"temporal", "spatial"};
    case Factorization::Axial:
      return {"temporal", "width", "height"};
    case Factorization::SpatialOnly:
      return {"spatial"};
  }
  return {};
}

template <class Real>
void EncoderLayerParams<Real>::collect(const std::string& prefix,
                                       NamedTensors<Real>& out) const {
  const auto names = attention_axis_names(kind);
  for (std::size_t i = 0; i < attention.size(); ++i) {
    const auto& a = attention[i];
    const std::string p = prefix + ".attn_" + names[i];
    out.emplace_back(p + ".wq", a.wq);
    out.emplace_back(p + ".bq", a.bq);
    out.emplace_back(p + ".wk", a.wk);
    out.emplace_back(p + ".bk", a.bk);
    out.emplace_back(p + ".wv", a.wv);
    out.emplace_back(p + ".bv", a.bv);
    out.emplace_back(p + ".wo", a.wo);
    out.emplace_back(p + ".bo", a.bo);
    collect_norm(p + ".pre", a.pre, out);
    collect_norm(p + ".post", a.post, out);
  }
  const std::string f = prefix + ".ffn";
  out.emplace_back(f + ".w1", ffn.w1);
  out.emplace_back(f + ".b1", ffn.b1);
  out.emplace_back(f + ".w2", ffn.w2);
  out.emplace_back(f + ".b2", ffn.b2);
  collect_norm(f + ".pre", ffn.pre, out);
  collect_norm(f + ".post", ffn.post, out);
  if (pool_kernel.defined()) out.emplace_back(prefix + ".pool_kernel", pool_kernel);
}

template <class Real>
AttentionParams<Real> init_attention_params(std::size_t width,
                                            std::mt19937_64& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(width));
  AttentionParams<Real> p;
  p.wq = gaussian<Real>({width, width}, sd, rng);
  p.bq = zeros<Real>({width});
  p.wk = gaussian<Real>({width, width}, sd, rng);
  p.bk = zeros<Real>({width});
  p.wv = gaussian<Real>({width, width}, sd, rng);
  p.bv = zeros<Real>({width});
  p.wo = gaussian<Real>({width, width}, sd, rng);
  p.bo = zeros<Real>({width});
  p.pre = unit_norm<Real>(width);
  p.post = unit_norm<Real>(width);
  return p;
}

template <class Real>
FeedForwardParams<Real> init_feed_forward_params(std::size_t width,
                                                 std::size_t hidden,
                                                 std::mt19937_64& rng) {
  FeedForwardParams<Real> p;
  p.w1 = gaussian<Real>({width, hidden},
                        1.0 / std::sqrt(static_cast<double>(width)), rng);
  p.b1 = zeros<Real>({hidden});
  p.w2 = gaussian<Real>({hidden, width},
                        1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  p.b2 = zeros<Real>({width});
  p.pre = unit_norm<Real>(width);
  p.post = unit_norm<Real>(width);
  return p;
}

template <class Real>
EncoderLayerParams<Real> init_encoder_layer(Factorization kind,
                                            std::size_t width,
                                            std::size_t hidden,
                                            bool with_pool_kernel,
                                            std::mt19937_64& rng) {
  EncoderLayerParams<Real> layer;
  layer.kind = kind;
  const auto count = attention_axis_names(kind).size();
  for (std::size_t i = 0; i < count; ++i)
    layer.attention.push_back(init_attention_params<Real>(width, rng));
  layer.ffn = init_feed_forward_params<Real>(width, hidden, rng);
  if (with_pool_kernel)
    layer.pool_kernel = Tensor<Real>({3}, {Real(0.25), Real(0.5), Real(0.25)}, true);
  return layer;
}

template <class Real>
Tensor<Real> attention_scores(const Tensor<Real>& q, const Tensor<Real>& k,
                              std::size_t heads) {
  if (q.rank() != 3 || k.rank() != 3 || q.dim(0) != k.dim(0) ||
      q.dim(2) != k.dim(2))
    throw DimensionError("attention_scores: q " + shape_string(q.shape()) +
                         " and k " + shape_string(k.shape()) +
                         " are not [N x L x C] with matching N and C");
  const std::size_t N = q.dim(0), Lq = q.dim(1), Lk = k.dim(1), C = q.dim(2);
  const std::size_t H = heads, dh = head_dim<Real>(C, heads);
  const Real factor = Real(1) / std::sqrt(static_cast<Real>(dh));

  std::vector<Real> out(N * H * Lq * Lk);
  const Real* qv = q.values().data();
  const Real* kv = k.values().data();
  Real* ov = out.data();
#pragma omp parallel for if (N >= kParallelSequences) schedule(static)
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < Lq; ++i) {
        const Real* qi = qv + (n * Lq + i) * C + h * dh;
        Real* row = ov + ((n * H + h) * Lq + i) * Lk;
        Real peak = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < Lk; ++j) {
          const Real* kj = kv + (n * Lk + j) * C + h * dh;
          Real s = 0;
          for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
          row[j] = s * factor;
          peak = std::max(peak, row[j]);
        }
        Real total = 0;
        for (std::size_t j = 0; j < Lk; ++j) {
          row[j] = std::exp(row[j] - peak);
          total += row[j];
        }
        for (std::size_t j = 0; j < Lk; ++j) row[j] /= total;
      }
    }
  }

  auto qn = q.node_ptr();
  auto kn = k.node_ptr();
  return Tensor<Real>::from_op(
      {N, H, Lq, Lk}, std::move(out), {q, k},
      [qn, kn, N, H, Lq, Lk, C, dh, factor](NodeOf<Real>& self) {
        const bool want_q = qn->requires_grad, want_k = kn->requires_grad;
        Real* dq = want_q ? qn->grad_buffer().data() : nullptr;
        Real* dk = want_k ? kn->grad_buffer().data() : nullptr;
        const Real* qv = qn->value.data();
        const Real* kv = kn->value.data();
        const Real* a = self.value.data();
        const Real* ga = self.grad.data();
#pragma omp parallel for if (N >= kParallelSequences) schedule(static)
        for (std::size_t n = 0; n < N; ++n) {
          std::vector<Real> ds(Lk);
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < Lq; ++i) {
              const std::size_t r = ((n * H + h) * Lq + i) * Lk;
              Real dot = 0;
              for (std::size_t j = 0; j < Lk; ++j) dot += a[r + j] * ga[r + j];
              for (std::size_t j = 0; j < Lk; ++j)
                ds[j] = a[r + j] * (ga[r + j] - dot) * factor;
              const std::size_t qi = (n * Lq + i) * C + h * dh;
              for (std::size_t j = 0; j < Lk; ++j) {
                const std::size_t kj = (n * Lk + j) * C + h * dh;
                if (dq)
                  for (std::size_t d = 0; d < dh; ++d)
                    dq[qi + d] += ds[j] * kv[kj + d];
                if (dk)
                  for (std::size_t d = 0; d < dh; ++d)
                    dk[kj + d] += ds[j] * qv[qi + d];
              }
            }
          }
        }
      });
}

template <class Real>
Tensor<Real> attention_apply(const Tensor<Real>& affinity,
                             const Tensor<Real>& v) {
  if (affinity.rank() != 4 || v.rank() != 3 || affinity.dim(0) != v.dim(0) ||
      affinity.dim(3) != v.dim(1))
    throw DimensionError("attention_apply: affinity " +
                         shape_string(affinity.shape()) + " does not match v " +
                         shape_string(v.shape()));
  const std::size_t N = affinity.dim(0), H = affinity.dim(1),
                    Lq = affinity.dim(2), Lk = affinity.dim(3), C = v.dim(2);
  const std::size_t dh = head_dim<Real>(C, H);

  std::vector<Real> out(N * Lq * C, Real(0));
  const Real* av = affinity.values().data();
  const Real* vv = v.values().data();
  Real* ov = out.data();
#pragma omp parallel for if (N >= kParallelSequences) schedule(static)
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < Lq; ++i) {
        Real* oi = ov + (n * Lq + i) * C + h * dh;
        const Real* arow = av + ((n * H + h) * Lq + i) * Lk;
        for (std::size_t j = 0; j < Lk; ++j) {
          const Real w = arow[j];
          const Real* vj = vv + (n * Lk + j) * C + h * dh;
          for (std::size_t d = 0; d < dh; ++d) oi[d] += w * vj[d];
        }
      }

  auto an = affinity.node_ptr();
  auto vn = v.node_ptr();
  return Tensor<Real>::from_op(
      {N, Lq, C}, std::move(out), {affinity, v},
      [an, vn, N, H, Lq, Lk, C, dh](NodeOf<Real>& self) {
        Real* da = an->requires_grad ? an->grad_buffer().data() : nullptr;
        Real* dv = vn->requires_grad ? vn->grad_buffer().data() : nullptr;
        const Real* av = an->value.data();
        const Real* vv = vn->value.data();
        const Real* go = self.grad.data();
#pragma omp parallel for if (N >= kParallelSequences) schedule(static)
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t i = 0; i < Lq; ++i) {
              const Real* gi = go + (n * Lq + i) * C + h * dh;
              const std::size_t r = ((n * H + h) * Lq + i) * Lk;
              for (std::size_t j = 0; j < Lk; ++j) {
                const std::size_t vj = (n * Lk + j) * C + h * dh;
                if (da) {
                  Real s = 0;
                  for (std::size_t d = 0; d < dh; ++d) s += gi[d] * vv[vj + d];
                  da[r + j] += s;
                }
                if (dv)
                  for (std::size_t d = 0; d < dh; ++d)
                    dv[vj + d] += av[r + j] * gi[d];
              }
            }
      });
}

template <class Real>
AttentionResult<Real> multi_head_attention(const Tensor<Real>& seqs,
                                           const AttentionParams<Real>& params,
                                           std::size_t heads,
                                           const PoolSpec& pool,
                                           const Tensor<Real>& pool_kernel) {
  const bool single = seqs.rank() == 2;
  if (!single && seqs.rank() != 3)
    throw DimensionError("multi_head_attention: expected [N x L x C] or [L x C], got " +
                         shape_string(seqs.shape()));
  const Tensor<Real> x =
      single ? reshape(seqs, {1, seqs.dim(0), seqs.dim(1)}) : seqs;
  head_dim<Real>(x.dim(2), heads);

  auto q = linear(x, params.wq, params.bq);
  auto k = linear(x, params.wk, params.bk);
  auto v = linear(x, params.wv, params.bv);
  auto affinity = attention_scores(q, k, heads);
  AttentionResult<Real> result;
  result.plan = PoolPlan<Real>::make(pool, affinity, pool_kernel);
  result.affinity = result.plan.pool_affinity(affinity);
  auto out = linear(attention_apply(result.affinity, v), params.wo, params.bo);
  if (single) {
    out = reshape(out, {out.dim(1), out.dim(2)});
  }
  result.out = out;
  return result;
}

template <class Real>
Tensor<Real> attention_sublayer(const Tensor<Real>& seqs,
                                const AttentionParams<Real>& params,
                                std::size_t heads, const PoolSpec& pool,
                                const Tensor<Real>& pool_kernel,
                                Tensor<Real>* affinity) {
  auto r = multi_head_attention(norm(seqs, params.pre), params, heads, pool,
                                pool_kernel);
  if (affinity) *affinity = r.affinity.detach();
  return norm(add(r.plan.pool_rows(seqs), r.out), params.post);
}

template <class Real>
Tensor<Real> feed_forward_sublayer(const Tensor<Real>& x,
                                   const FeedForwardParams<Real>& params) {
  auto h = gelu(linear(norm(x, params.pre), params.w1, params.b1));
  return norm(add(x, linear(h, params.w2, params.b2)), params.post);
}

template <class Real>
GridResult<Real> temporal_attention(const Tensor<Real>& grid,
                                    const AttentionParams<Real>& params,
                                    std::size_t heads, const PoolSpec& pool,
                                    const Tensor<Real>& pool_kernel) {
  if (grid.rank() != 4)
    throw DimensionError("temporal_attention: expected [B x T+1 x P+1 x C], got " +
                         shape_string(grid.shape()));
  const std::size_t B = grid.dim(0), L = grid.dim(1), S = grid.dim(2),
                    C = grid.dim(3);
  auto lines = reshape(permute(grid, {0, 2, 1, 3}), {B * S, L, C});
  auto r = multi_head_attention(lines, params, heads, pool, pool_kernel);
  const std::size_t rows = r.out.dim(1);
  auto tokens = permute(reshape(r.out, {B, S, rows, C}), {0, 2, 1, 3});
  return {tokens, lines_to_maps(r.affinity, B)};
}

template <class Real>
GridResult<Real> spatial_attention(const Tensor<Real>& grid,
                                   const AttentionParams<Real>& params,
                                   std::size_t heads) {
  if (grid.rank() != 4)
    throw DimensionError("spatial_attention: expected [B x T+1 x P+1 x C], got " +
                         shape_string(grid.shape()));
  const std::size_t B = grid.dim(0), L = grid.dim(1), S = grid.dim(2),
                    C = grid.dim(3);
  auto r = multi_head_attention(reshape(grid, {B * L, S, C}), params, heads);
  return {reshape(r.out, {B, L, S, C}), lines_to_maps(r.affinity, B)};
}

template <class Real>
Tensor<Real> separable_encoder_layer(const Tensor<Real>& grid,
                                     const EncoderLayerParams<Real>& params,
                                     std::size_t heads, const PoolSpec& pool,
                                     AttentionMaps<Real>* maps) {
  if (params.kind != Factorization::Separable || params.attention.size() != 2)
    throw ConfigError("separable_encoder_layer: parameters are for a " +
                      to_string(params.kind) + " layer");
  if (grid.rank() != 4)
    throw DimensionError("separable_encoder_layer: expected [B x T+1 x P+1 x C], got " +
                         shape_string(grid.shape()));
  const std::size_t B = grid.dim(0), L = grid.dim(1), S = grid.dim(2),
                    C = grid.dim(3);
  Tensor<Real> aff_t, aff_s;
  auto lines = reshape(permute(grid, {0, 2, 1, 3}), {B * S, L, C});
  auto t = attention_sublayer(lines, params.attention[0], heads, pool,
                              params.pool_kernel, maps ? &aff_t : nullptr);
  const std::size_t rows = t.dim(1);
  auto frames = reshape(permute(reshape(t, {B, S, rows, C}), {0, 2, 1, 3}),
                        {B * rows, S, C});
  auto s = attention_sublayer(frames, params.attention[1], heads, PoolSpec{},
                              Tensor<Real>{}, maps ? &aff_s : nullptr);
  auto y = feed_forward_sublayer(s, params.ffn);
  if (maps) {
    maps->temporal = lines_to_maps(aff_t, B);
    maps->spatial = lines_to_maps(aff_s, B);
  }
  return reshape(y, {B, rows, S, C});
}

template <class Real>
Tensor<Real> joint_encoder_layer(const Tensor<Real>& seq,
                                 const EncoderLayerParams<Real>& params,
                                 std::size_t heads, AttentionMaps<Real>* maps) {
  if (params.kind != Factorization::Joint || params.attention.size() != 1)
    throw ConfigError("joint_encoder_layer: parameters are for a " +
                      to_string(params.kind) + " layer");
  if (seq.rank() != 3)
    throw DimensionError("joint_encoder_layer: expected [B x L x C], got " +
                         shape_string(seq.shape()));
  Tensor<Real> aff;
  auto x = attention_sublayer(seq, params.attention[0], heads, PoolSpec{},
                              Tensor<Real>{}, maps ? &aff : nullptr);
  if (maps) maps->joint = aff;
  return feed_forward_sublayer(x, params.ffn);
}

template <class Real>
Tensor<Real> axial_encoder_layer(const Tensor<Real>& grid,
                                 const EncoderLayerParams<Real>& params,
                                 std::size_t heads, const PoolSpec& pool,
                                 AttentionMaps<Real>* maps) {
  if (params.kind != Factorization::Axial || params.attention.size() != 3)
    throw ConfigError("axial_encoder_layer: parameters are for a " +
                      to_string(params.kind) + " layer");
  if (grid.rank() != 5)
    throw DimensionError("axial_encoder_layer: expected [B x T+1 x Wp+1 x Hp+1 x C], got " +
                         shape_string(grid.shape()));
  const std::size_t B = grid.dim(0), L = grid.dim(1), W = grid.dim(2),
                    Hh = grid.dim(3), C = grid.dim(4);
  Tensor<Real> aff_t, aff_w, aff_h;

  auto lines = reshape(permute(grid, {0, 2, 3, 1, 4}), {B * W * Hh, L, C});
  auto t = attention_sublayer(lines, params.attention[0], heads, pool,
                              params.pool_kernel, maps ? &aff_t : nullptr);
  const std::size_t rows = t.dim(1);
  auto x = permute(reshape(t, {B, W, Hh, rows, C}), {0, 3, 1, 2, 4});

  auto wl = reshape(permute(x, {0, 1, 3, 2, 4}), {B * rows * Hh, W, C});
  auto w = attention_sublayer(wl, params.attention[1], heads, PoolSpec{},
                              Tensor<Real>{}, maps ? &aff_w : nullptr);
  x = permute(reshape(w, {B, rows, Hh, W, C}), {0, 1, 3, 2, 4});

  auto hl = reshape(x, {B * rows * W, Hh, C});
  auto h = attention_sublayer(hl, params.attention[2], heads, PoolSpec{},
                              Tensor<Real>{}, maps ? &aff_h : nullptr);
  auto y = feed_forward_sublayer(h, params.ffn);
  if (maps) {
    maps->temporal = lines_to_maps(aff_t, B);
    maps->axial_w = lines_to_maps(aff_w, B);
    maps->axial_h = lines_to_maps(aff_h, B);
  }
  return reshape(y, {B, rows, W, Hh, C});
}

template <class Real>
Tensor<Real> spatial_only_layer(const Tensor<Real>& frames,
                                const EncoderLayerParams<Real>& params,
                                std::size_t heads, AttentionMaps<Real>* maps) {
  if (params.kind != Factorization::SpatialOnly || params.attention.size() != 1)
    throw ConfigError("spatial_only_layer: parameters are for a " +
                      to_string(params.kind) + " layer");
  if (frames.rank() != 4)
    throw DimensionError("spatial_only_layer: expected [B x T x P+1 x C], got " +
                         shape_string(frames.shape()));
  const std::size_t B = frames.dim(0), T = frames.dim(1), S = frames.dim(2),
                    C = frames.dim(3);
  Tensor<Real> aff;
  auto x = attention_sublayer(reshape(frames, {B * T, S, C}),
                              params.attention[0], heads, PoolSpec{},
                              Tensor<Real>{}, maps ? &aff : nullptr);
  auto y = feed_forward_sublayer(x, params.ffn);
  if (maps) maps->spatial = lines_to_maps(aff, B);
  return reshape(y, {B, T, S, C});
}

#define VIDTR_INSTANTIATE_ATTENTION(Real)                                      \
  template struct EncoderLayerParams<Real>;                                    \
  template AttentionParams<Real> init_attention_params<Real>(                  \
      std::size_t, std::mt19937_64&);                                          \
  template FeedForwardParams<Real> init_feed_forward_params<Real>(             \
      std::size_t, std::size_t, std::mt19937_64&);                             \
  template EncoderLayerParams<Real> init_encoder_layer<Real>(                  \
      Factorization, std::size_t, std::size_t, bool, std::mt19937_64&);        \
  template Tensor<Real> attention_scores(const Tensor<Real>&,                  \
                                         const Tensor<Real>&, std::size_t);    \
  template Tensor<Real> attention_apply(const Tensor<Real>&,                   \
                                        const Tensor<Real>&);                  \
  template AttentionResult<Real> multi_head_attention(                         \
      const Tensor<Real>&, const AttentionParams<Real>&, std::size_t,          \
      const PoolSpec&, const Tensor<Real>&);                                   \
  template Tensor<Real> attention_sublayer(                                    \
      const Tensor<Real>&, const AttentionParams<Real>&, std::size_t,          \
      const PoolSpec&, const Tensor<Real>&, Tensor<Real>*);                    \
  template Tensor<Real> feed_forward_sublayer(const Tensor<Real>&,             \
                                              const FeedForwardParams<Real>&); \
  template GridResult<Real> temporal_attention(                                \
      const Tensor<Real>&, const AttentionParams<Real>&, std::size_t,          \
      const PoolSpec&, const Tensor<Real>&);                                   \
  template GridResult<Real> spatial_attention(                                 \
      const Tensor<Real>&, const AttentionParams<Real>&, std::size_t);         \
  template Tensor<Real> separable_encoder_layer(                               \
      const Tensor<Real>&, const EncoderLayerParams<Real>&, std::size_t,       \
      const PoolSpec&, AttentionMaps<Real>*);                                  \
  template Tensor<Real> joint_encoder_layer(const Tensor<Real>&,               \
                                            const EncoderLayerParams<Real>&,   \
                                            std::size_t, AttentionMaps<Real>*); \
  template Tensor<Real> axial_encoder_layer(                                   \
      const Tensor<Real>&, const EncoderLayerParams<Real>&, std::size_t,       \
      const PoolSpec&, AttentionMaps<Real>*);                                  \
  template Tensor<Real> spatial_only_layer(const Tensor<Real>&,                \
                                           const EncoderLayerParams<Real>&,    \
                                           std::size_t, AttentionMaps<Real>*);

VIDTR_INSTANTIATE_ATTENTION(float)
VIDTR_INSTANTIATE_ATTENTION(double)

#undef VIDTR_INSTANTIATE_ATTENTION

}  // namespace vidtr
