#include "vidtr/temporal_pool.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vidtr/ops.hpp"

namespace vidtr {

std::string to_string(PoolKind kind) {
  switch (kind) {
    case PoolKind::None: return "none";
    case PoolKind::Avg: return "avg";
    case PoolKind::Conv1d: return "conv1d";
    case PoolKind::TopkStd: return "topk_std";
  }
  return "none";
}

PoolKind parse_pool_kind(const std::string& name) {
  if (name == "none") return PoolKind::None;
  if (name == "avg") return PoolKind::Avg;
  if (name == "conv1d") return PoolKind::Conv1d;
  if (name == "topk_std") return PoolKind::TopkStd;
  throw ConfigError("unknown pool kind '" + name +
                    "' (expected none, avg, conv1d or topk_std)");
}

std::size_t stride2_rows(std::size_t rows) {
  const std::size_t t = rows - 1;
  return 1 + (t + 1) / 2;
}

namespace {

template <class Real>
void require_square(const Tensor<Real>& attn, const char* op) {
  if (attn.rank() != 2 || attn.dim(0) != attn.dim(1) || attn.dim(0) < 2)
    throw DimensionError(std::string(op) +
                         ": expected a square (T+1)x(T+1) affinity, got " +
                         shape_string(attn.shape()));
}

// Sigma of rows 1..L-1 of an L x L row-major matrix, in double.
template <class Real>
std::vector<double> row_sigma(const Real* m, std::size_t L) {
  const std::size_t T = L - 1;
  std::vector<double> sigma(T);
  for (std::size_t i = 1; i < L; ++i) {
    const Real* row = m + i * L;
    double mu = 0;
    for (std::size_t j = 0; j < L; ++j) mu += row[j];
    mu /= static_cast<double>(L);
    double ss = 0;
    for (std::size_t j = 0; j < L; ++j) {
      const double d = row[j] - mu;
      ss += d * d;
    }
    sigma[i - 1] = std::sqrt(ss) / static_cast<double>(T);
  }
  return sigma;
}

}  // namespace

template <class Real>
RowStats<Real> row_mean_std(const Tensor<Real>& attn) {
  require_square(attn, "row_mean_std");
  const std::size_t L = attn.dim(0), T = L - 1;
  std::vector<Real> mu(T), sigma(T);
  auto v = attn.values();
  for (std::size_t i = 1; i < L; ++i) {
    const Real* row = v.data() + i * L;
    Real m = 0;
    for (std::size_t j = 0; j < L; ++j) m += row[j];
    m /= static_cast<Real>(L);
    Real ss = 0;
    for (std::size_t j = 0; j < L; ++j) ss += (row[j] - m) * (row[j] - m);
    mu[i - 1] = m;
    sigma[i - 1] = std::sqrt(ss) / static_cast<Real>(T);
  }
  return {Tensor<Real>({T}, std::move(mu)), Tensor<Real>({T}, std::move(sigma))};
}

std::vector<std::size_t> topk_std_rows(std::span<const double> sigma,
                                       std::size_t tau) {
  const std::size_t T = sigma.size();
  if (tau < 1 || tau > T)
    throw ConfigError("topk_std: tau " + std::to_string(tau) +
                      " out of range for " + std::to_string(T) + " rows");
  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sigma[a] > sigma[b];
  });
  order.resize(tau);
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> rows{0};
  for (auto r : order) rows.push_back(r + 1);
  return rows;
}

template <class Real>
Tensor<Real> pool_topk_std(const Tensor<Real>& attn, std::size_t tau) {
  require_square(attn, "pool_topk_std");
  const std::size_t L = attn.dim(0), T = L - 1;
  if (tau < 1 || tau >= T)
    throw ConfigError("pool_topk_std: tau " + std::to_string(tau) +
                      " must satisfy 1 <= tau < T = " + std::to_string(T));
  auto sigma = row_sigma(attn.values().data(), L);
  auto rows = topk_std_rows(sigma, tau);
  auto picked = take_rows(reshape(attn, {1, 1, L, L}), rows, rows.size());
  return reshape(picked, {rows.size(), L});
}

template <class Real>
Tensor<Real> pool_avg(const Tensor<Real>& attn) {
  require_square(attn, "pool_avg");
  const std::size_t L = attn.dim(0);
  auto out = avg_rows(reshape(attn, {1, L, L}));
  return reshape(out, {out.dim(1), L});
}

template <class Real>
Tensor<Real> pool_conv1d(const Tensor<Real>& attn, const Tensor<Real>& kernel) {
  require_square(attn, "pool_conv1d");
  const std::size_t L = attn.dim(0);
  auto out = clamp_renormalize_rows(conv_rows(reshape(attn, {1, L, L}), kernel),
                                    static_cast<Real>(kConvRenormFloor));
  return reshape(out, {out.dim(1), L});
}

template <class Real>
Tensor<Real> avg_rows(const Tensor<Real>& x) {
  if (x.rank() != 3 || x.dim(1) < 2)
    throw DimensionError("avg_rows: expected [R x L x D] with L >= 2, got " +
                         shape_string(x.shape()));
  const std::size_t R = x.dim(0), L = x.dim(1), D = x.dim(2);
  const std::size_t K = stride2_rows(L);
  std::vector<Real> v(R * K * D);
  auto xv = x.values();
  for (std::size_t r = 0; r < R; ++r) {
    const Real* in = xv.data() + r * L * D;
    Real* out = v.data() + r * K * D;
    std::copy(in, in + D, out);
    for (std::size_t j = 1; j < K; ++j) {
      const std::size_t a = 2 * j - 1, b = 2 * j;
      for (std::size_t d = 0; d < D; ++d)
        out[j * D + d] = b < L ? (in[a * D + d] + in[b * D + d]) * Real(0.5)
                               : in[a * D + d];
    }
  }
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op(
      {R, K, D}, std::move(v), {x}, [xn, R, L, D, K](detail::Node<Real>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t r = 0; r < R; ++r) {
          Real* gin = g.data() + r * L * D;
          const Real* gout = self.grad.data() + r * K * D;
          for (std::size_t d = 0; d < D; ++d) gin[d] += gout[d];
          for (std::size_t j = 1; j < K; ++j) {
            const std::size_t a = 2 * j - 1, b = 2 * j;
            for (std::size_t d = 0; d < D; ++d) {
              if (b < L) {
                gin[a * D + d] += gout[j * D + d] * Real(0.5);
                gin[b * D + d] += gout[j * D + d] * Real(0.5);
              } else {
                gin[a * D + d] += gout[j * D + d];
              }
            }
          }
        }
      });
}

template <class Real>
Tensor<Real> conv_rows(const Tensor<Real>& x, const Tensor<Real>& kernel) {
  if (x.rank() != 3 || x.dim(1) < 2)
    throw DimensionError("conv_rows: expected [R x L x D] with L >= 2, got " +
                         shape_string(x.shape()));
  if (kernel.size() != 3)
    throw DimensionError("conv_rows: kernel must have 3 taps, got " +
                         shape_string(kernel.shape()));
  const std::size_t R = x.dim(0), L = x.dim(1), D = x.dim(2);
  const std::size_t K = stride2_rows(L);
  std::vector<Real> v(R * K * D, Real(0));
  auto xv = x.values();
  auto w = kernel.values();
  for (std::size_t r = 0; r < R; ++r) {
    const Real* in = xv.data() + r * L * D;
    Real* out = v.data() + r * K * D;
    std::copy(in, in + D, out);
    for (std::size_t j = 1; j < K; ++j) {
      const std::size_t center = 2 * j - 1;
      for (std::size_t tap = 0; tap < 3; ++tap) {
        const std::size_t src = center + tap;  // center - 1 + tap, shifted by 1
        if (src < 2 || src > L) continue;      // zero padding around rows 1..L-1
        const Real* row = in + (src - 1) * D;
        for (std::size_t d = 0; d < D; ++d) out[j * D + d] += w[tap] * row[d];
      }
    }
  }
  auto xn = x.node_ptr();
  auto kn = kernel.node_ptr();
  return Tensor<Real>::from_op(
      {R, K, D}, std::move(v), {x, kernel},
      [xn, kn, R, L, D, K](detail::Node<Real>& self) {
        Real* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        Real* gk = kn->requires_grad ? kn->grad_buffer().data() : nullptr;
        const auto& w = kn->value;
        for (std::size_t r = 0; r < R; ++r) {
          const Real* in = xn->value.data() + r * L * D;
          const Real* gout = self.grad.data() + r * K * D;
          if (gx)
            for (std::size_t d = 0; d < D; ++d) gx[r * L * D + d] += gout[d];
          for (std::size_t j = 1; j < K; ++j) {
            const std::size_t center = 2 * j - 1;
            for (std::size_t tap = 0; tap < 3; ++tap) {
              const std::size_t src = center + tap;
              if (src < 2 || src > L) continue;
              const std::size_t row = src - 1;
              Real dot = 0;
              for (std::size_t d = 0; d < D; ++d) {
                if (gx) gx[(r * L + row) * D + d] += w[tap] * gout[j * D + d];
                dot += gout[j * D + d] * in[row * D + d];
              }
              if (gk) gk[tap] += dot;
            }
          }
        }
      });
}

template <class Real>
Tensor<Real> clamp_renormalize_rows(const Tensor<Real>& x, Real floor) {
  if (x.rank() != 3)
    throw DimensionError("clamp_renormalize_rows: expected [R x L x D], got " +
                         shape_string(x.shape()));
  const std::size_t R = x.dim(0), L = x.dim(1), D = x.dim(2);
  std::vector<Real> v(x.values().begin(), x.values().end());
  std::vector<Real> sums(R * L, Real(1));
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t i = 1; i < L; ++i) {
      Real* row = v.data() + (r * L + i) * D;
      Real s = 0;
      for (std::size_t d = 0; d < D; ++d) {
        row[d] = std::max(row[d], floor);
        s += row[d];
      }
      for (std::size_t d = 0; d < D; ++d) row[d] /= s;
      sums[r * L + i] = s;
    }
  auto xn = x.node_ptr();
  return Tensor<Real>::from_op(
      x.shape(), std::move(v), {x},
      [xn, R, L, D, floor, sums = std::move(sums)](detail::Node<Real>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t r = 0; r < R; ++r) {
          for (std::size_t d = 0; d < D; ++d)
            g[r * L * D + d] += self.grad[r * L * D + d];
          for (std::size_t i = 1; i < L; ++i) {
            const std::size_t base = (r * L + i) * D;
            const Real* y = self.value.data() + base;
            const Real* dy = self.grad.data() + base;
            Real dot = 0;
            for (std::size_t d = 0; d < D; ++d) dot += dy[d] * y[d];
            const Real s = sums[r * L + i];
            for (std::size_t d = 0; d < D; ++d)
              if (xn->value[base + d] > floor) g[base + d] += (dy[d] - dot) / s;
          }
        }
      });
}

template <class Real>
PoolPlan<Real> PoolPlan<Real>::make(const PoolSpec& spec,
                                    const Tensor<Real>& affinity,
                                    const Tensor<Real>& conv_kernel) {
  if (affinity.rank() != 4 || affinity.dim(2) != affinity.dim(3))
    throw DimensionError("PoolPlan: expected [N x H x L x L] affinity, got " +
                         shape_string(affinity.shape()));
  const std::size_t N = affinity.dim(0), H = affinity.dim(1),
                    L = affinity.dim(2), T = L - 1;
  PoolPlan plan;
  plan.kind_ = spec.kind;
  switch (spec.kind) {
    case PoolKind::None:
      plan.rows_ = L;
      break;
    case PoolKind::Avg:
      plan.rows_ = stride2_rows(L);
      break;
    case PoolKind::Conv1d:
      if (!conv_kernel.defined())
        throw ConfigError("conv1d pooling needs a kernel parameter");
      plan.rows_ = stride2_rows(L);
      plan.kernel_ = conv_kernel;
      break;
    case PoolKind::TopkStd: {
      const std::size_t tau = spec.target_tau;
      if (tau < 1 || tau > T)
        throw ConfigError("topk_std: tau " + std::to_string(tau) +
                          " exceeds temporal extent " + std::to_string(T));
      plan.rows_ = tau + 1;
      plan.selected_.reserve(N * plan.rows_);
      if (tau == T) {
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t i = 0; i < L; ++i) plan.selected_.push_back(i);
        break;
      }
      auto av = affinity.values();
      std::vector<double> mean(L * L);
      for (std::size_t n = 0; n < N; ++n) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t h = 0; h < H; ++h) {
          const Real* m = av.data() + (n * H + h) * L * L;
          for (std::size_t i = 0; i < L * L; ++i) mean[i] += m[i];
        }
        for (auto& x : mean) x /= static_cast<double>(H);
        auto rows = topk_std_rows(row_sigma(mean.data(), L), tau);
        plan.selected_.insert(plan.selected_.end(), rows.begin(), rows.end());
      }
      break;
    }
  }
  return plan;
}

template <class Real>
Tensor<Real> PoolPlan<Real>::pool_affinity(const Tensor<Real>& a) const {
  const std::size_t N = a.dim(0), H = a.dim(1), L = a.dim(2);
  switch (kind_) {
    case PoolKind::None:
      return a;
    case PoolKind::TopkStd:
      return take_rows(a, selected_, rows_);
    case PoolKind::Avg:
      return reshape(avg_rows(reshape(a, {N * H, L, L})), {N, H, rows_, L});
    case PoolKind::Conv1d: {
      auto c = conv_rows(reshape(a, {N * H, L, L}), kernel_);
      c = clamp_renormalize_rows(c, static_cast<Real>(kConvRenormFloor));
      return reshape(c, {N, H, rows_, L});
    }
  }
  return a;
}

template <class Real>
Tensor<Real> PoolPlan<Real>::pool_rows(const Tensor<Real>& x) const {
  const std::size_t N = x.dim(0), L = x.dim(1), D = x.dim(2);
  switch (kind_) {
    case PoolKind::None:
      return x;
    case PoolKind::TopkStd:
      return reshape(take_rows(reshape(x, {N, 1, L, D}), selected_, rows_),
                     {N, rows_, D});
    case PoolKind::Avg:
      return avg_rows(x);
    case PoolKind::Conv1d:
      return conv_rows(x, kernel_);
  }
  return x;
}

#define VIDTR_INSTANTIATE_POOL(Real)                                           \
  template RowStats<Real> row_mean_std(const Tensor<Real>&);                   \
  template Tensor<Real> pool_topk_std(const Tensor<Real>&, std::size_t);       \
  template Tensor<Real> pool_avg(const Tensor<Real>&);                         \
  template Tensor<Real> pool_conv1d(const Tensor<Real>&, const Tensor<Real>&); \
  template Tensor<Real> avg_rows(const Tensor<Real>&);                         \
  template Tensor<Real> conv_rows(const Tensor<Real>&, const Tensor<Real>&);   \
  template Tensor<Real> clamp_renormalize_rows(const Tensor<Real>&, Real);     \
  template class PoolPlan<Real>;

VIDTR_INSTANTIATE_POOL(float)
VIDTR_INSTANTIATE_POOL(double)

#undef VIDTR_INSTANTIATE_POOL

}  // namespace vidtr
