// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and budgets are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "test_util.hpp"
#include "vidtr/attention.hpp"
#include "vidtr/cli.hpp"
#include "vidtr/cost_model.hpp"
#include "vidtr/grad_check.hpp"
#include "vidtr/harness.hpp"
#include "vidtr/ops.hpp"
#include "vidtr/patch_embed.hpp"
#include "vidtr/rollout.hpp"
#include "vidtr/temporal_pool.hpp"

using namespace vidtr;
using vidtr::testing::as_double;
using vidtr::testing::max_abs_diff;
using vidtr::testing::naive_matmul;
using vidtr::testing::random_clip;
using vidtr::testing::random_stochastic;
using vidtr::testing::random_tensor;

namespace fs = std::filesystem;

namespace {

constexpr int kInstances = 1000;
constexpr double kStochasticTol = 1e-12;
constexpr double kCollapseTol = 1e-9;
constexpr double kGradTol = 1e-3;
constexpr double kGradStep = 1e-4;
constexpr double kMinMemoryRatio = 3.3;
constexpr double kReductionLo = 0.40, kReductionHi = 0.65;
constexpr double kSeparableTarget = 0.90;
constexpr double kSpatialOnlyCeiling = 0.40;
constexpr std::size_t kEpochBudget = 100;
constexpr double kInvariantBudgetS = 120, kGradBudgetS = 300, kTrainBudgetS = 900;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first failure of a criterion.
struct Check {
  Outcome out;
  void expect(bool ok, const std::string& what) {
    if (!ok && out.pass) {
      out.pass = false;
      out.detail = what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool rows_stochastic(std::span<const double> v, std::size_t cols) {
  for (std::size_t r = 0; r < v.size() / cols; ++r) {
    double total = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (v[r * cols + j] < 0) return false;
      total += v[r * cols + j];
    }
    if (std::abs(total - 1.0) > kStochasticTol) return false;
  }
  return true;
}

// sigma over all T+1 columns, divided by T, rows 1..T.
std::vector<double> oracle_sigma(const std::vector<double>& m, std::size_t L) {
  std::vector<double> s;
  for (std::size_t i = 1; i < L; ++i) {
    double mu = 0;
    for (std::size_t j = 0; j < L; ++j) mu += m[i * L + j];
    mu /= static_cast<double>(L);
    double ss = 0;
    for (std::size_t j = 0; j < L; ++j) ss += (m[i * L + j] - mu) * (m[i * L + j] - mu);
    s.push_back(std::sqrt(ss) / static_cast<double>(L - 1));
  }
  return s;
}

std::vector<std::size_t> sort_oracle(const std::vector<double>& sigma, std::size_t tau) {
  std::vector<std::size_t> idx(sigma.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return sigma[a] != sigma[b] ? sigma[a] > sigma[b] : a < b;
  });
  std::vector<std::size_t> rows{0};
  for (std::size_t i = 0; i < tau; ++i) rows.push_back(idx[i] + 1);
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::vector<double> random_affinity(std::size_t L, std::mt19937_64& rng, bool ties) {
  auto m = random_stochastic(L, L, rng);
  if (ties)
    for (std::size_t i = 2; i < L; ++i)
      if (rng() % 2) {
        const std::size_t src = 1 + rng() % (i - 1);
        std::copy(m.begin() + src * L, m.begin() + (src + 1) * L, m.begin() + i * L);
      }
  return m;
}

TensorD normalized_rows(Shape shape, std::mt19937_64& rng) {
  auto x = random_tensor<double>(shape, rng);
  const std::size_t C = shape.back();
  auto v = x.mutable_values();
  for (std::size_t r = 0; r < x.size() / C; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < C; ++c) mean += v[r * C + c];
    mean /= C;
    for (std::size_t c = 0; c < C; ++c) var += std::pow(v[r * C + c] - mean, 2);
    var /= C;
    for (std::size_t c = 0; c < C; ++c) v[r * C + c] = (v[r * C + c] - mean) / std::sqrt(var);
  }
  return x;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

Outcome invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  Check c;
  std::mt19937_64 rng(1001);

  for (int i = 0; i < kInstances && c.out.pass; ++i) {
    const std::size_t rows = 1 + rng() % 6, cols = 1 + rng() % 12;
    auto s = softmax_rows(random_tensor<double>({rows, cols}, rng, -30, 30));
    c.expect(rows_stochastic(s.values(), cols), "softmax row not stochastic");
    const std::size_t H = 1 + rng() % 4, C = H * (1 + rng() % 4), Lq = 1 + rng() % 6,
                      Lk = 1 + rng() % 6;
    auto a = attention_scores(random_tensor<double>({2, Lq, C}, rng, -4, 4),
                              random_tensor<double>({2, Lk, C}, rng, -4, 4), H);
    c.expect(rows_stochastic(a.values(), Lk), "affinity row not stochastic");
  }

  for (int i = 0; i < kInstances && c.out.pass; ++i) {
    const std::size_t T = 2 * (1 + rng() % 6), L = T + 1, tau = 1 + rng() % (T - 1);
    const auto m = random_stochastic(L, L, rng);
    const TensorD a({L, L}, m);
    const auto kernel = random_tensor<double>({3}, rng, 0, 1);
    for (const auto& out : {pool_avg(a), pool_conv1d(a, kernel), pool_topk_std(a, tau)}) {
      bool same = true;
      for (std::size_t j = 0; j < L; ++j) same &= out.at({0, j}) == m[j];
      c.expect(same, "class affinity row changed by pooling");
      c.expect(rows_stochastic(out.values(), L), "pooled affinity row not stochastic");
    }
    auto aff = TensorD({1, 1, L, L}, m);
    auto x = random_tensor<double>({1, L, 3}, rng);
    for (auto spec : {PoolSpec{PoolKind::Avg, T / 2}, PoolSpec{PoolKind::Conv1d, T / 2},
                      PoolSpec{PoolKind::TopkStd, tau}}) {
      auto plan = PoolPlan<double>::make(spec, aff, kernel);
      auto y = plan.pool_rows(x);
      bool same = true;
      for (std::size_t j = 0; j < 3; ++j) same &= y.values()[j] == x.values()[j];
      c.expect(same, "class token row changed by " + to_string(spec.kind) + " pooling");
    }
  }

  for (int i = 0; i < kInstances && c.out.pass; ++i) {
    const std::size_t T = 2 + rng() % 11, L = T + 1, tau = 1 + rng() % (T - 1);
    const auto m = random_affinity(L, rng, i % 2 == 0);
    const double scale = std::uniform_real_distribution<double>(0.25, 4.0)(rng);
    auto scaled = m;
    for (auto& v : scaled) v *= scale;
    const auto pa = pool_topk_std(TensorD({L, L}, m), tau);
    const auto pb = pool_topk_std(TensorD({L, L}, scaled), tau);
    bool same = true;
    for (std::size_t k = 0; k < pa.size(); ++k) same &= pb.values()[k] == pa.values()[k] * scale;
    c.expect(same, "top-k selection changed under sigma scaling");
  }

  for (int i = 0; i < kInstances && c.out.pass; ++i) {
    const std::size_t H = 1 + rng() % 2, C = 4 * H, P = 1 + rng() % 4;
    auto sep = init_encoder_layer<double>(Factorization::Separable, C, 2 * C, false, rng);
    for (auto& w : sep.attention[0].wo.mutable_values()) w = 0;
    for (auto& g : sep.attention[0].post.gamma.mutable_values()) g = std::sqrt(1 + kLayerNormEps);
    auto joint = init_encoder_layer<double>(Factorization::Joint, C, 2 * C, false, rng);
    joint.attention[0] = sep.attention[1];
    joint.ffn = sep.ffn;
    auto spatial = joint;
    spatial.kind = Factorization::SpatialOnly;
    auto grid = normalized_rows({1, 2, P + 1, C}, rng);
    auto frame = reshape(take_rows(reshape(grid, {1, 1, 2, (P + 1) * C}),
                                   std::vector<std::size_t>{1}, 1),
                         {1, P + 1, C});
    auto ys = separable_encoder_layer(grid, sep, H, {});
    auto yj = joint_encoder_layer(frame, joint, H);
    auto yo = spatial_only_layer(reshape(frame, {1, 1, P + 1, C}), spatial, H);
    std::vector<double> row1(ys.values().begin() + (P + 1) * C, ys.values().end());
    c.expect(max_abs_diff(row1, as_double(yj)) <= kCollapseTol, "T=1 separable != joint");
    c.expect(as_double(yo) == as_double(yj), "T=1 spatial-only != joint");
  }

  for (int i = 0; i < kInstances && c.out.pass; ++i) {
    const std::size_t s = 1 + rng() % 3, tt = std::vector<std::size_t>{1, 2, 4}[rng() % 3];
    const std::size_t ch = 1 + rng() % 3, t = tt * (1 + rng() % 3), w = s * (1 + rng() % 4),
                      h = s * (1 + rng() % 4);
    const auto clip = random_clip(ch, t, w, h, rng);
    c.expect(unpatchify(patchify<double>(clip, {s, tt}), ch, t, w, h, {s, tt}) == clip,
             "patchify round trip lost data");
  }

  const double secs = seconds_since(t0);
  c.expect(secs < kInvariantBudgetS, "over the time budget");
  if (c.out.pass)
    c.out.detail = "5 families x " + std::to_string(kInstances) + " instances, " +
                   fmt("%.1f s", secs);
  return c.out;
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1002);
  const std::size_t C = 4, H = 2;
  GradCheckOptions opt;
  opt.step = kGradStep;
  opt.max_entries_per_param = 12;
  double worst = 0;
  std::string worst_case;
  struct Case {
    Factorization kind;
    PoolSpec pool;
  };
  for (auto cs : {Case{Factorization::Joint, {}}, Case{Factorization::Separable, {}},
                  Case{Factorization::Separable, {PoolKind::Avg, 2}},
                  Case{Factorization::Separable, {PoolKind::Conv1d, 2}},
                  Case{Factorization::Separable, {PoolKind::TopkStd, 2}},
                  Case{Factorization::Axial, {}},
                  Case{Factorization::SpatialOnly, {}}}) {
    auto p = init_encoder_layer<double>(cs.kind, C, 6, cs.pool.kind == PoolKind::Conv1d, rng);
    NamedTensors<double> params;
    p.collect("layer", params);
    Shape in_shape;
    switch (cs.kind) {
      case Factorization::Joint: in_shape = {1, 5, C}; break;
      case Factorization::Separable: in_shape = {1, 5, 3, C}; break;
      case Factorization::Axial: in_shape = {1, 3, 2, 2, C}; break;
      case Factorization::SpatialOnly: in_shape = {1, 2, 3, C}; break;
    }
    auto x = random_tensor<double>(in_shape, rng, -1, 1, true);
    auto f = [&]() -> TensorD {
      TensorD y;
      switch (cs.kind) {
        case Factorization::Joint: y = joint_encoder_layer(x, p, H); break;
        case Factorization::Separable: y = separable_encoder_layer(x, p, H, cs.pool); break;
        case Factorization::Axial: y = axial_encoder_layer(x, p, H, cs.pool); break;
        case Factorization::SpatialOnly: y = spatial_only_layer(x, p, H); break;
      }
      TensorD w(y.shape(), std::vector<double>(y.size(), 0.0));
      for (std::size_t i = 0; i < y.size(); ++i)
        w.mutable_values()[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
      return sum(mul(y, w));
    };
    params.emplace_back("x", x);
    const auto r = grad_check(f, params, opt);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_case = to_string(cs.kind) + "/" + to_string(cs.pool.kind);
    }
  }

  auto model = Model<double>::build(model_preset("toy"), 3);
  const auto clip = random_clip(1, 8, 32, 32, rng);
  const VideoClip* batch[] = {&clip};
  opt.max_entries_per_param = 4;
  const auto r = grad_check(
      [&] { return cross_entropy(model.forward(batch), std::vector<int>{1}); },
      model.parameters(), opt);
  if (r.max_rel_error >= worst) {
    worst = r.max_rel_error;
    worst_case = "toy model (" + r.worst_param + ")";
  }

  const double secs = seconds_since(t0);
  Outcome out{worst < kGradTol && secs < kGradBudgetS,
              "worst relative error " + fmt("%.2e", worst) + " at " + worst_case + ", " +
                  fmt("%.1f s", secs)};
  return out;
}

Outcome pooling_oracle() {
  std::mt19937_64 rng(1003);
  int ties = 0;
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t T = 2 + rng() % 11, L = T + 1, tau = 1 + rng() % (T - 1);
    const auto m = random_affinity(L, rng, i % 2 == 0);
    const auto sigma = oracle_sigma(m, L);
    ties += std::set<double>(sigma.begin(), sigma.end()).size() < sigma.size();
    const auto rows = sort_oracle(sigma, tau);
    const auto picked = pool_topk_std(TensorD({L, L}, m), tau);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < L; ++j)
        if (picked.at({r, j}) != m[rows[r] * L + j])
          return {false, "mismatch on instance " + std::to_string(i)};
  }
  return {true, std::to_string(kInstances) + " matrices, T <= 12, " + std::to_string(ties) +
                    " with tied sigma"};
}

Outcome complexity() {
  auto joint = model_preset("vidtr_s");
  joint.factorization = Factorization::Joint;
  const auto sep = model_preset("vidtr_s");
  // 224/16 = 14 -> P = 196, T = 8.
  const std::uint64_t T = 8, P = 196;
  const std::uint64_t joint_oracle = (T * P + 1) * (T * P + 1);
  const std::uint64_t sep_oracle = (P + 1) * (T + 1) * (T + 1) + (T + 1) * (P + 1) * (P + 1);
  const auto j = affinity_counts_per_head(joint), s = affinity_counts_per_head(sep);
  bool ok = joint_oracle == 2461761 && sep_oracle == 365238;
  for (std::size_t l = 0; l < j.size(); ++l) ok &= j[l] == joint_oracle && s[l] == sep_oracle;
  const double ratio = static_cast<double>(j[0]) / static_cast<double>(s[0]);
  ok &= ratio >= kMinMemoryRatio;
  return {ok, "joint " + std::to_string(j[0]) + " vs separable " + std::to_string(s[0]) +
                  " per head per layer, ratio " + fmt("%.4f", ratio)};
}

Outcome compact_reduction() {
  const auto base = flops_estimate(model_preset("vidtr_s"));
  const auto compact = flops_estimate(model_preset("c_vidtr_s"));
  const double r = reduction(base.encoder_macs(), compact.encoder_macs());
  return {r >= kReductionLo && r <= kReductionHi,
          "attention+FFN MACs " + std::to_string(base.encoder_macs()) + " -> " +
              std::to_string(compact.encoder_macs()) + ", reduction " +
              fmt("%.2f%%", 100 * r)};
}

Outcome temporal_separation() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto train_set = gen_moving_dot(1, 800, Split::Train);
  const auto test_set = gen_moving_dot(1, 200, Split::Test);
  TrainConfig tc;
  tc.epochs = kEpochBudget;
  tc.seed = 0;

  auto sep_cfg = model_preset("toy");
  auto sep = Model<float>::build(sep_cfg, 7);
  tc.target_accuracy = kSeparableTarget;
  const auto sep_rows = train(sep, train_set, tc, &test_set);
  double sep_best = 0;
  std::size_t sep_epoch = 0;
  for (const auto& r : sep_rows)
    if (r.split == Split::Test && r.accuracy > sep_best) {
      sep_best = r.accuracy;
      sep_epoch = r.epoch;
    }
  const double sep_secs = seconds_since(t0);

  auto wh_cfg = model_preset("toy");
  wh_cfg.factorization = Factorization::SpatialOnly;
  auto wh = Model<float>::build(wh_cfg, 7);
  tc.target_accuracy = 0;
  const auto wh_rows = train(wh, train_set, tc, &test_set);
  double wh_best = 0;
  for (const auto& r : wh_rows)
    if (r.split == Split::Test) wh_best = std::max(wh_best, r.accuracy);

  const bool ok = sep_best >= kSeparableTarget && sep_secs < kTrainBudgetS &&
                  wh_best <= kSpatialOnlyCeiling;
  return {ok, "separable " + fmt("%.3f", sep_best) + " at epoch " + std::to_string(sep_epoch) +
                  " (" + fmt("%.0f s", sep_secs) + "), spatial-only best " +
                  fmt("%.3f", wh_best) + " over " + std::to_string(kEpochBudget) +
                  " epochs (" + fmt("%.0f s", seconds_since(t0) - sep_secs) + ")"};
}

Outcome identity_pooling() {
  std::mt19937_64 rng(1007);
  auto plain_cfg = model_preset("toy");
  std::vector<VideoClip> clips;
  for (int i = 0; i < 8; ++i) clips.push_back(random_clip(1, 8, 32, 32, rng));
  std::vector<const VideoClip*> ptrs;
  for (const auto& c : clips) ptrs.push_back(&c);
  std::size_t compared = 0;
  for (std::size_t layer = 0; layer < plain_cfg.depth; ++layer) {
    auto topk_cfg = plain_cfg;
    topk_cfg.pool = PoolKind::TopkStd;
    topk_cfg.downsample_layers = {layer};
    topk_cfg.downsample_taus = {plain_cfg.clip_len};
    const auto a = Model<float>::build(plain_cfg, 11).forward(ptrs);
    const auto b = Model<float>::build(topk_cfg, 11).forward(ptrs);
    if (as_double(a) != as_double(b))
      return {false, "logits differ with tau=T at layer " + std::to_string(layer)};
    compared += a.size();
  }
  return {true, std::to_string(compared) + " logits bit-identical"};
}

Outcome rollout_exactness() {
  std::mt19937_64 rng(1008);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t layers = 1 + rng() % 4, H = 1 + rng() % 3, T = 1 + rng() % 5,
                      P = 1 + rng() % 5, L = T + 1, S = P + 1;
    std::vector<AttentionMaps<double>> maps;
    std::vector<std::vector<double>> raw_t, raw_s;
    for (std::size_t l = 0; l < layers; ++l) {
      std::vector<double> t, s;
      for (std::size_t k = 0; k < H * S; ++k) {
        auto blk = random_stochastic(L, L, rng);
        t.insert(t.end(), blk.begin(), blk.end());
      }
      for (std::size_t k = 0; k < H * L; ++k) {
        auto blk = random_stochastic(S, S, rng);
        s.insert(s.end(), blk.begin(), blk.end());
      }
      AttentionMaps<double> m;
      m.temporal = TensorD({1, H, S, L, L}, t);
      m.spatial = TensorD({1, H, L, S, S}, s);
      maps.push_back(m);
      raw_t.push_back(t);
      raw_s.push_back(s);
    }
    // Product oracle: head mean per line, then factor_l * acc for l = 2..n.
    auto product = [&](const std::vector<std::vector<double>>& raw, std::size_t lines,
                       std::size_t n) {
      std::vector<double> out;
      for (std::size_t line = 0; line < lines; ++line) {
        std::vector<double> acc;
        for (std::size_t l = 0; l < raw.size(); ++l) {
          std::vector<double> mean(n * n, 0.0);
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t e = 0; e < n * n; ++e) mean[e] += raw[l][(h * lines + line) * n * n + e];
          for (auto& v : mean) v /= static_cast<double>(H);
          acc = l == 0 ? mean : naive_matmul(mean, acc, n, n, n);
        }
        out.insert(out.end(), acc.begin(), acc.end());
      }
      return out;
    };
    const auto masks = accumulate(maps);
    if (as_double(masks.mask_t) != product(raw_t, S, L) ||
        as_double(masks.mask_s) != product(raw_s, L, S))
      return {false, "accumulate differs from the product oracle on instance " +
                         std::to_string(i)};

    const auto sl = class_slices(masks.mask_t, masks.mask_s);
    const auto st = combine(sl.mask_t, sl.mask_s);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t p = 0; p < P; ++p) {
        const double mt = masks.mask_t.values()[((p + 1) * L + 0) * L + t + 1];
        const double ms = masks.mask_s.values()[((t + 1) * S + 0) * S + p + 1];
        if (sl.mask_t.values()[p * T + t] != mt || sl.mask_s.values()[t * P + p] != ms ||
            st.values()[t * P + p] != mt * ms)
          return {false, "class slice or combine mismatch on instance " + std::to_string(i)};
      }

    const std::size_t n = T * P, keep = (3 * n + 9) / 10;
    const auto sel = threshold_top(st, 0.30);
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) order[k] = k;
    const auto v = st.values();
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return v[a] != v[b] ? v[a] > v[b] : a < b;
    });
    std::vector<bool> expect(n, false);
    for (std::size_t k = 0; k < keep; ++k) expect[order[k]] = true;
    if (sel != expect)
      return {false, "threshold differs from the sort oracle on instance " + std::to_string(i)};
  }

  auto model = Model<float>::build(model_preset("toy"), 3);
  const auto clip = random_clip(1, 8, 32, 32, rng);
  const auto r = rollout(model, clip);
  const auto kept = std::count(r.selected.begin(), r.selected.end(), true);
  if (kept != 39) return {false, "toy rollout kept " + std::to_string(kept) + " of 128"};
  return {true, std::to_string(kInstances) + " random stacks exact; toy clip keeps " +
                    std::to_string(kept) + " of 128 = ceil(0.30*8*16)"};
}

Outcome persistence() {
  const fs::path dir = fs::temp_directory_path() / "vidtr_acceptance_ckpt";
  fs::create_directories(dir);
  std::mt19937_64 rng(1009);
  const auto clip = random_clip(1, 8, 32, 32, rng);
  Check c;
  auto compact = model_preset("toy");
  compact.pool = PoolKind::Conv1d;
  compact.downsample_layers = {1};
  compact.downsample_taus = {4};
  for (const auto& cfg : {model_preset("toy"), compact}) {
    auto model = Model<float>::build(cfg, 5);
    save_checkpoint(model, dir / "m.ckpt");
    const auto loaded = load_checkpoint<float>(dir / "m.ckpt");
    c.expect(as_double(model.forward(clip)) == as_double(loaded.forward(clip)),
             "reloaded logits differ");
  }
  const std::string good = slurp(dir / "m.ckpt");
  auto expect_error = [&](const std::string& bytes, auto tag, const std::string& what) {
    using E = decltype(tag);
    std::ofstream(dir / "bad.ckpt", std::ios::binary | std::ios::trunc) << bytes;
    try {
      load_checkpoint<float>(dir / "bad.ckpt");
      c.expect(false, what + ": no error");
    } catch (const E&) {
    } catch (const std::exception& e) {
      c.expect(false, what + ": wrong error '" + e.what() + "'");
    }
  };
  auto magic = good;
  magic[0] = 'Z';
  expect_error(magic, CheckpointHeaderError(""), "bad magic");
  expect_error(good.substr(0, good.size() - 5), CheckpointTruncatedError(""), "truncation");
  auto renamed = good;
  renamed[renamed.find("head.bias")] = 'H';
  expect_error(renamed, CheckpointMismatchError(""), "renamed tensor");
  fs::remove_all(dir);
  if (c.out.pass) c.out.detail = "bit-exact reload; header, truncated and mismatch errors raised";
  return c.out;
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "vidtr_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return run_cli(args, sink, sink); };
  const auto d = [&](const std::string& name) { return (dir / name).string(); };
  std::ofstream(dir / "run.cfg") << "preset=toy\nepochs=3\nbatch_size=16\nmilestones=2\n";
  bool ok = run({"gen-data", "--seed", "3", "--n", "64", "--out", d("train.bin")}) == 0 &&
            run({"gen-data", "--seed", "3", "--n", "32", "--split", "test", "--out",
                 d("test.bin")}) == 0;
  for (const char* out : {"a", "b"})
    ok = ok && run({"train", "--config", d("run.cfg"), "--data", d("train.bin"),
                    "--test-data", d("test.bin"), "--out", d(out)}) == 0;
  if (!ok) return {false, "cli run failed: " + sink.str()};
  const bool csv = slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv");
  const bool ckpt = slurp(dir / "a" / "model.ckpt") == slurp(dir / "b" / "model.ckpt");
  const auto bytes = fs::file_size(dir / "a" / "model.ckpt");
  fs::remove_all(dir);
  return {csv && ckpt, std::string("metrics.csv ") + (csv ? "identical" : "DIFFERENT") +
                           ", model.ckpt " + (ckpt ? "identical" : "DIFFERENT") + " (" +
                           std::to_string(bytes) + " bytes)"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"invariant suite", invariants},
      {"gradient checks", gradient_checks},
      {"top-k pooling oracle", pooling_oracle},
      {"affinity complexity", complexity},
      {"compact reduction", compact_reduction},
      {"temporal-reasoning separation", temporal_separation},
      {"identity pooling", identity_pooling},
      {"rollout exactness", rollout_exactness},
      {"persistence", persistence},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2zu  %-30s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu of %zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed ? 1 : 0;
}
