#include "vidtr/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace vidtr {

namespace {

// Head-reduced stack of matrices [lines x L x L] for one batch element of a
// [B x H x lines x L x L] map.
template <class Real>
std::vector<double> reduce_heads(const Tensor<Real>& map, std::size_t b,
                                 HeadReduce mode) {
  const std::size_t H = map.dim(1), S = map.dim(2), Lq = map.dim(3),
                    Lk = map.dim(4);
  const std::size_t block = S * Lq * Lk;
  std::vector<double> out(block, mode == HeadReduce::Max ? -1.0 : 0.0);
  auto v = map.values();
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t base = (b * H + h) * block;
    for (std::size_t i = 0; i < block; ++i) {
      const double a = static_cast<double>(v[base + i]);
      if (mode == HeadReduce::Max)
        out[i] = std::max(out[i], a);
      else
        out[i] += a;
    }
  }
  if (mode == HeadReduce::Mean)
    for (auto& x : out) x /= static_cast<double>(H);
  return out;
}

void residual_adjust(std::vector<double>& stack, std::size_t L) {
  for (std::size_t m = 0; m < stack.size() / (L * L); ++m)
    for (std::size_t i = 0; i < L; ++i) {
      double* row = stack.data() + (m * L + i) * L;
      double total = 0;
      for (std::size_t j = 0; j < L; ++j) {
        row[j] = 0.5 * (row[j] + (i == j ? 1.0 : 0.0));
        total += row[j];
      }
      for (std::size_t j = 0; j < L; ++j) row[j] /= total;
    }
}

// acc <- factor * acc for every matrix of the stacks.
void left_multiply(std::vector<double>& acc, const std::vector<double>& factor,
                   std::size_t L) {
  std::vector<double> out(acc.size(), 0.0);
  for (std::size_t m = 0; m < acc.size() / (L * L); ++m) {
    const double* f = factor.data() + m * L * L;
    const double* a = acc.data() + m * L * L;
    double* o = out.data() + m * L * L;
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t k = 0; k < L; ++k) {
        const double fik = f[i * L + k];
        for (std::size_t j = 0; j < L; ++j) o[i * L + j] += fik * a[k * L + j];
      }
  }
  acc.swap(out);
}

}  // namespace

template <class Real>
RolloutMasks accumulate(const std::vector<AttentionMaps<Real>>& maps,
                        std::size_t batch_index, const RolloutOptions& options) {
  if (maps.empty()) throw DimensionError("accumulate: no layers");
  std::vector<double> acc_t, acc_s;
  std::size_t S = 0, L = 0;
  for (std::size_t l = 0; l < maps.size(); ++l) {
    const auto& m = maps[l];
    if (!m.temporal.defined() || !m.spatial.defined() || m.spatial.rank() != 5)
      throw UnsupportedConfiguration(
          "rollout needs separable attention maps (layer " + std::to_string(l) + ")");
    if (m.temporal.dim(3) != m.temporal.dim(4))
      throw UnsupportedConfiguration(
          "rollout does not support temporal down-sampling: layer " +
          std::to_string(l) + " maps " + std::to_string(m.temporal.dim(4)) +
          " temporal rows to " + std::to_string(m.temporal.dim(3)));
    if (batch_index >= m.temporal.dim(0))
      throw DimensionError("accumulate: batch index out of range");
    if (l == 0) {
      S = m.temporal.dim(2);
      L = m.temporal.dim(3);
    } else if (m.temporal.dim(2) != S || m.temporal.dim(3) != L) {
      throw UnsupportedConfiguration("rollout needs layer-constant map shapes");
    }
    auto t = reduce_heads(m.temporal, batch_index, options.heads);
    auto s = reduce_heads(m.spatial, batch_index, options.heads);
    if (options.residual_adjust) {
      residual_adjust(t, L);
      residual_adjust(s, S);
    }
    if (l == 0) {
      acc_t = std::move(t);
      acc_s = std::move(s);
    } else {
      left_multiply(acc_t, t, L);
      left_multiply(acc_s, s, S);
    }
  }
  return {TensorD({S, L, L}, std::move(acc_t)), TensorD({L, S, S}, std::move(acc_s))};
}

ClassSlices class_slices(const TensorD& mask_t, const TensorD& mask_s) {
  if (mask_t.rank() != 3 || mask_s.rank() != 3 || mask_t.dim(1) != mask_t.dim(2) ||
      mask_s.dim(1) != mask_s.dim(2) || mask_t.dim(0) != mask_s.dim(1) ||
      mask_s.dim(0) != mask_t.dim(1))
    throw DimensionError("class_slices: masks " + shape_string(mask_t.shape()) +
                         " and " + shape_string(mask_s.shape()) + " do not conform");
  const std::size_t P = mask_t.dim(0) - 1, T = mask_t.dim(1) - 1;
  TensorD mt({P, T}), ms({T, P});
  auto mtv = mt.mutable_values();
  auto msv = ms.mutable_values();
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t t = 0; t < T; ++t) mtv[p * T + t] = mask_t.at({p + 1, 0, t + 1});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t p = 0; p < P; ++p) msv[t * P + p] = mask_s.at({t + 1, 0, p + 1});
  return {mt, ms};
}

TensorD combine(const TensorD& mt, const TensorD& ms) {
  if (mt.rank() != 2 || ms.rank() != 2 || mt.dim(0) != ms.dim(1) ||
      mt.dim(1) != ms.dim(0))
    throw DimensionError("combine: " + shape_string(mt.shape()) + " and " +
                         shape_string(ms.shape()) + " do not conform");
  const std::size_t T = ms.dim(0), P = ms.dim(1);
  TensorD out({T, P});
  auto o = out.mutable_values();
  auto a = mt.values();
  auto b = ms.values();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t p = 0; p < P; ++p) o[t * P + p] = a[p * T + t] * b[t * P + p];
  return out;
}

std::size_t threshold_count(double fraction, std::size_t n) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("threshold fraction must lie in (0, 1]");
  const double x = fraction * static_cast<double>(n);
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, x))
    return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(x));
}

std::vector<bool> threshold_top(const TensorD& mask, double fraction) {
  if (!mask.defined() || mask.size() == 0)
    throw DimensionError("threshold_top: empty mask");
  const std::size_t n = mask.size(), keep = threshold_count(fraction, n);
  auto v = mask.values();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  std::vector<bool> selected(n, false);
  for (std::size_t i = 0; i < keep; ++i) selected[order[i]] = true;
  return selected;
}

void render(const TensorD& mask, const std::vector<bool>* selected,
            std::size_t across_w, std::size_t across_h, std::size_t patch,
            const std::filesystem::path& out_dir) {
  if (mask.rank() != 2 || mask.dim(1) != across_w * across_h)
    throw DimensionError("render: mask " + shape_string(mask.shape()) +
                         " does not match a " + std::to_string(across_w) + "x" +
                         std::to_string(across_h) + " patch lattice");
  if (selected && selected->size() != mask.size())
    throw DimensionError("render: selection size differs from the mask");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const std::size_t T = mask.dim(0), P = mask.dim(1);
  const std::size_t width = across_w * patch, height = across_h * patch;
  auto v = mask.values();
  const double peak = *std::max_element(v.begin(), v.end());

  for (std::size_t t = 0; t < T; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.pgm", t);
    std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("render: cannot write " + (out_dir / name).string());
    out << "P5\n" << width << ' ' << height << "\n255\n";
    std::vector<unsigned char> pixels(width * height);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t p = (x / patch) * across_h + y / patch;
        const std::size_t i = t * P + p;
        double level;
        if (selected)
          level = (*selected)[i] ? 255.0 : 0.0;
        else
          level = peak > 0 ? std::round(255.0 * std::max(0.0, v[i]) / peak) : 0.0;
        pixels[y * width + x] = static_cast<unsigned char>(level);
      }
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (!out) throw std::runtime_error("render: write failed for " + (out_dir / name).string());
  }

  std::ofstream csv(out_dir / "mask.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("render: cannot write " + (out_dir / "mask.csv").string());
  csv << "t,patch,value\n";
  char line[96];
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t p = 0; p < P; ++p) {
      std::snprintf(line, sizeof line, "%zu,%zu,%.9g\n", t, p, v[t * P + p]);
      csv << line;
    }
}

RolloutResult rollout(const Model<float>& model, const VideoClip& clip,
                      double fraction, const RolloutOptions& options) {
  const auto& config = model.config();
  if (config.factorization != Factorization::Separable)
    throw UnsupportedConfiguration("rollout needs a separable model, not " +
                                   to_string(config.factorization));
  if (config.compact())
    throw UnsupportedConfiguration(
        "rollout does not support compact models with temporal down-sampling");
  NoGradGuard no_grad;
  std::vector<AttentionMaps<float>> maps;
  model.forward(clip, &maps);
  RolloutResult r;
  r.masks = accumulate(maps, 0, options);
  r.slices = class_slices(r.masks.mask_t, r.masks.mask_s);
  r.mask_st = combine(r.slices.mask_t, r.slices.mask_s);
  r.selected = threshold_top(r.mask_st, fraction);
  return r;
}

template RolloutMasks accumulate(const std::vector<AttentionMaps<float>>&,
                                 std::size_t, const RolloutOptions&);
template RolloutMasks accumulate(const std::vector<AttentionMaps<double>>&,
                                 std::size_t, const RolloutOptions&);

}  // namespace vidtr
