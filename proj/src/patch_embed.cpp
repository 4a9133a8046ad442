#include "vidtr/patch_embed.hpp"

#include <cmath>
#include <string>

#include "vidtr/ops.hpp"

namespace vidtr {

PatchLattice patch_lattice(std::size_t channels, std::size_t frames,
                           std::size_t width, std::size_t height,
                           const PatchGeometry& g) {
  if (g.patch == 0 || g.temporal == 0)
    throw DimensionError("patch sizes must be positive");
  if (width % g.patch != 0 || height % g.patch != 0)
    throw DimensionError("frame " + std::to_string(width) + "x" +
                         std::to_string(height) +
                         " is not divisible by patch size " +
                         std::to_string(g.patch));
  if (frames == 0 || frames % g.temporal != 0)
    throw DimensionError("clip length " + std::to_string(frames) +
                         " is not divisible by temporal patch extent " +
                         std::to_string(g.temporal));
  PatchLattice l;
  l.frames = frames / g.temporal;
  l.across_w = width / g.patch;
  l.across_h = height / g.patch;
  l.patch_dim = channels * g.patch * g.patch * g.temporal;
  return l;
}

namespace {

// Calls fn(row, col, clip_index) for every patch entry.
template <class Fn>
void for_each_patch_entry(std::size_t channels, std::size_t frames,
                          std::size_t width, std::size_t height,
                          const PatchGeometry& g, const PatchLattice& l,
                          Fn&& fn) {
  const std::size_t s = g.patch, te = g.temporal;
  for (std::size_t tb = 0; tb < l.frames; ++tb)
    for (std::size_t wi = 0; wi < l.across_w; ++wi)
      for (std::size_t hi = 0; hi < l.across_h; ++hi) {
        const std::size_t row = tb * l.per_frame() + wi * l.across_h + hi;
        std::size_t col = 0;
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t dt = 0; dt < te; ++dt)
            for (std::size_t dw = 0; dw < s; ++dw)
              for (std::size_t dh = 0; dh < s; ++dh, ++col) {
                const std::size_t t = tb * te + dt;
                const std::size_t w = wi * s + dw;
                const std::size_t h = hi * s + dh;
                fn(row, col, ((c * frames + t) * width + w) * height + h);
              }
      }
}

}  // namespace

template <class Real>
Tensor<Real> patchify(const VideoClip& clip, const PatchGeometry& g) {
  if (clip.data.size() !=
      clip.channels * clip.frames * clip.width * clip.height)
    throw DimensionError("clip data size does not match its extents");
  const auto l =
      patch_lattice(clip.channels, clip.frames, clip.width, clip.height, g);
  std::vector<Real> v(l.total() * l.patch_dim);
  for_each_patch_entry(clip.channels, clip.frames, clip.width, clip.height, g,
                       l, [&](std::size_t r, std::size_t c, std::size_t src) {
                         v[r * l.patch_dim + c] = static_cast<Real>(clip.data[src]);
                       });
  return Tensor<Real>({l.total(), l.patch_dim}, std::move(v));
}

template <class Real>
Tensor<Real> patchify_batch(std::span<const VideoClip* const> clips,
                            const PatchGeometry& g) {
  if (clips.empty()) throw DimensionError("patchify_batch: empty batch");
  const VideoClip& first = *clips.front();
  const auto l =
      patch_lattice(first.channels, first.frames, first.width, first.height, g);
  const std::size_t per = l.total() * l.patch_dim;
  std::vector<Real> v(clips.size() * per);
  for (std::size_t b = 0; b < clips.size(); ++b) {
    const VideoClip& clip = *clips[b];
    if (clip.channels != first.channels || clip.frames != first.frames ||
        clip.width != first.width || clip.height != first.height)
      throw DimensionError("patchify_batch: clips differ in geometry");
    Real* dst = v.data() + b * per;
    for_each_patch_entry(clip.channels, clip.frames, clip.width, clip.height,
                         g, l,
                         [&](std::size_t r, std::size_t c, std::size_t src) {
                           dst[r * l.patch_dim + c] =
                               static_cast<Real>(clip.data[src]);
                         });
  }
  return Tensor<Real>({clips.size(), l.total(), l.patch_dim}, std::move(v));
}

template <class Real>
VideoClip unpatchify(const Tensor<Real>& patches, std::size_t channels,
                     std::size_t frames, std::size_t width, std::size_t height,
                     const PatchGeometry& g) {
  const auto l = patch_lattice(channels, frames, width, height, g);
  if (patches.rank() != 2 || patches.dim(0) != l.total() ||
      patches.dim(1) != l.patch_dim)
    throw DimensionError("unpatchify: patches " +
                         shape_string(patches.shape()) +
                         " do not match clip geometry");
  VideoClip clip(channels, frames, width, height);
  auto pv = patches.values();
  for_each_patch_entry(channels, frames, width, height, g, l,
                       [&](std::size_t r, std::size_t c, std::size_t dst) {
                         clip.data[dst] =
                             static_cast<float>(pv[r * l.patch_dim + c]);
                       });
  return clip;
}

EmbedLayout make_embed_layout(TokenLayout kind, const PatchLattice& l) {
  EmbedLayout e;
  e.kind = kind;
  e.patch_count = l.total();
  const std::size_t T = l.frames, P = l.per_frame();
  auto cls = [](std::size_t c) { return -1 - static_cast<std::int64_t>(c); };

  switch (kind) {
    case TokenLayout::Flat: {
      e.token_shape = {T * P + 1};
      e.class_count = 1;
      e.source.push_back(cls(0));
      for (std::size_t i = 0; i < T * P; ++i)
        e.source.push_back(static_cast<std::int64_t>(i));
      e.pos_table_rows = {T * P + 1};
      e.pos_index.resize(1);
      for (std::size_t i = 0; i < T * P + 1; ++i) e.pos_index[0].push_back(i);
      break;
    }
    case TokenLayout::Grid: {
      e.token_shape = {T + 1, P + 1};
      e.class_count = T + P + 1;
      e.pos_table_rows = {T + 1, P + 1};
      e.pos_index.resize(2);
      for (std::size_t t = 0; t <= T; ++t)
        for (std::size_t p = 0; p <= P; ++p) {
          if (t == 0)
            e.source.push_back(cls(p));
          else if (p == 0)
            e.source.push_back(cls(P + t));
          else
            e.source.push_back(static_cast<std::int64_t>((t - 1) * P + p - 1));
          e.pos_index[0].push_back(t);
          e.pos_index[1].push_back(p);
        }
      break;
    }
    case TokenLayout::Frames: {
      e.token_shape = {T, P + 1};
      e.class_count = 1;
      e.pos_table_rows = {P + 1};
      e.pos_index.resize(1);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t p = 0; p <= P; ++p) {
          e.source.push_back(p == 0 ? cls(0)
                                    : static_cast<std::int64_t>(t * P + p - 1));
          e.pos_index[0].push_back(p);
        }
      break;
    }
    case TokenLayout::Axial: {
      const std::size_t Wp = l.across_w, Hp = l.across_h;
      e.token_shape = {T + 1, Wp + 1, Hp + 1};
      e.pos_table_rows = {T + 1, Wp + 1, Hp + 1};
      e.pos_index.resize(3);
      std::size_t next_cls = 0;
      for (std::size_t t = 0; t <= T; ++t)
        for (std::size_t w = 0; w <= Wp; ++w)
          for (std::size_t h = 0; h <= Hp; ++h) {
            if (t == 0 || w == 0 || h == 0)
              e.source.push_back(cls(next_cls++));
            else
              e.source.push_back(static_cast<std::int64_t>(
                  (t - 1) * P + (w - 1) * Hp + (h - 1)));
            e.pos_index[0].push_back(t);
            e.pos_index[1].push_back(w);
            e.pos_index[2].push_back(h);
          }
      e.class_count = next_cls;
      break;
    }
  }
  return e;
}

template <class Real>
EmbedParams<Real> init_embed_params(const EmbedLayout& layout,
                                    std::size_t patch_dim, std::size_t width,
                                    std::mt19937_64& rng) {
  auto normal_tensor = [&rng](Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<Real> v(shape_size(shape));
    for (auto& x : v) x = static_cast<Real>(dist(rng));
    return Tensor<Real>(std::move(shape), std::move(v), true);
  };
  EmbedParams<Real> p;
  p.weight = normal_tensor({patch_dim, width},
                           1.0 / std::sqrt(static_cast<double>(patch_dim)));
  p.bias = Tensor<Real>({width}, true);
  p.cls = normal_tensor({layout.class_count, width}, 0.02);
  for (auto rows : layout.pos_table_rows)
    p.pos.push_back(normal_tensor({rows, width}, 0.02));
  return p;
}

template <class Real>
Tensor<Real> assemble_tokens(const Tensor<Real>& patch_tokens,
                             const Tensor<Real>& cls,
                             const std::vector<Tensor<Real>>& pos,
                             const EmbedLayout& layout) {
  if (patch_tokens.rank() != 3 || patch_tokens.dim(1) != layout.patch_count)
    throw DimensionError("assemble_tokens: expected [B x " +
                         std::to_string(layout.patch_count) +
                         " x C] patch tokens, got " +
                         shape_string(patch_tokens.shape()));
  const std::size_t B = patch_tokens.dim(0), C = patch_tokens.dim(2);
  if (cls.rank() != 2 || cls.dim(0) != layout.class_count || cls.dim(1) != C)
    throw DimensionError("assemble_tokens: class table " +
                         shape_string(cls.shape()) + " does not match layout");
  if (pos.size() != layout.pos_table_rows.size())
    throw DimensionError("assemble_tokens: positional table count mismatch");
  for (std::size_t k = 0; k < pos.size(); ++k)
    if (pos[k].rank() != 2 || pos[k].dim(0) != layout.pos_table_rows[k] ||
        pos[k].dim(1) != C)
      throw DimensionError("assemble_tokens: positional table " +
                           shape_string(pos[k].shape()) +
                           " does not match layout");

  const std::size_t L = layout.positions();
  const std::size_t n_patch = layout.patch_count;
  std::vector<Real> v(B * L * C);
  auto ptv = patch_tokens.values();
  auto clv = cls.values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i) {
      Real* dst = v.data() + (b * L + i) * C;
      const auto src = layout.source[i];
      const Real* from =
          src >= 0 ? ptv.data() + (b * n_patch + static_cast<std::size_t>(src)) * C
                   : clv.data() + static_cast<std::size_t>(-1 - src) * C;
      for (std::size_t c = 0; c < C; ++c) dst[c] = from[c];
      for (std::size_t k = 0; k < pos.size(); ++k) {
        const Real* row = pos[k].values().data() + layout.pos_index[k][i] * C;
        for (std::size_t c = 0; c < C; ++c) dst[c] += row[c];
      }
    }

  Shape shape{B};
  shape.insert(shape.end(), layout.token_shape.begin(), layout.token_shape.end());
  shape.push_back(C);
  std::vector<Tensor<Real>> parents{patch_tokens, cls};
  std::vector<typename Tensor<Real>::NodePtr> pos_nodes;
  for (auto& t : pos) {
    parents.push_back(t);
    pos_nodes.push_back(t.node_ptr());
  }
  auto pn = patch_tokens.node_ptr();
  auto cn = cls.node_ptr();
  return Tensor<Real>::from_op(
      std::move(shape), std::move(v), std::move(parents),
      [pn, cn, pos_nodes, B, L, C, n_patch,
       source = layout.source, pos_index = layout.pos_index](
          detail::Node<Real>& self) {
        Real* gp = pn->requires_grad ? pn->grad_buffer().data() : nullptr;
        Real* gc = cn->requires_grad ? cn->grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t i = 0; i < L; ++i) {
            const Real* g = self.grad.data() + (b * L + i) * C;
            const auto src = source[i];
            Real* dst = nullptr;
            if (src >= 0) {
              if (gp) dst = gp + (b * n_patch + static_cast<std::size_t>(src)) * C;
            } else if (gc) {
              dst = gc + static_cast<std::size_t>(-1 - src) * C;
            }
            if (dst)
              for (std::size_t c = 0; c < C; ++c) dst[c] += g[c];
            for (std::size_t k = 0; k < pos_nodes.size(); ++k) {
              if (!pos_nodes[k]->requires_grad) continue;
              Real* row = pos_nodes[k]->grad_buffer().data() + pos_index[k][i] * C;
              for (std::size_t c = 0; c < C; ++c) row[c] += g[c];
            }
          }
      });
}

template <class Real>
Tensor<Real> embed_and_position(const Tensor<Real>& patches,
                                const EmbedParams<Real>& params,
                                const EmbedLayout& layout) {
  Tensor<Real> batched = patches;
  if (patches.rank() == 2)
    batched = reshape(patches, {1, patches.dim(0), patches.dim(1)});
  Tensor<Real> tokens = linear(batched, params.weight, params.bias);
  return assemble_tokens(tokens, params.cls, params.pos, layout);
}

#define VIDTR_INSTANTIATE_EMBED(Real)                                          \
  template Tensor<Real> patchify<Real>(const VideoClip&, const PatchGeometry&); \
  template Tensor<Real> patchify_batch<Real>(std::span<const VideoClip* const>, \
                                             const PatchGeometry&);            \
  template VideoClip unpatchify(const Tensor<Real>&, std::size_t, std::size_t,  \
                                std::size_t, std::size_t, const PatchGeometry&); \
  template EmbedParams<Real> init_embed_params<Real>(                          \
      const EmbedLayout&, std::size_t, std::size_t, std::mt19937_64&);         \
  template Tensor<Real> assemble_tokens(const Tensor<Real>&,                   \
                                        const Tensor<Real>&,                   \
                                        const std::vector<Tensor<Real>>&,      \
                                        const EmbedLayout&);                   \
  template Tensor<Real> embed_and_position(                                    \
      const Tensor<Real>&, const EmbedParams<Real>&, const EmbedLayout&);

VIDTR_INSTANTIATE_EMBED(float)
VIDTR_INSTANTIATE_EMBED(double)

#undef VIDTR_INSTANTIATE_EMBED

}  // namespace vidtr
