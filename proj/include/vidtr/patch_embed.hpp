#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vidtr/tensor.hpp"

namespace vidtr {

/// Raw clip, C x T x W x H row-major (height fastest), values in [0,1].
struct VideoClip {
  std::size_t channels = 1;
  std::size_t frames = 1;
  std::size_t width = 1;
  std::size_t height = 1;
  std::vector<float> data;

  VideoClip() = default;
  VideoClip(std::size_t c, std::size_t t, std::size_t w, std::size_t h)
      : channels(c), frames(t), width(w), height(h), data(c * t * w * h, 0.0f) {}

  std::size_t index(std::size_t c, std::size_t t, std::size_t w,
                    std::size_t h) const {
    return ((c * frames + t) * width + w) * height + h;
  }
  float& at(std::size_t c, std::size_t t, std::size_t w, std::size_t h) {
    return data[index(c, t, w, h)];
  }
  float at(std::size_t c, std::size_t t, std::size_t w, std::size_t h) const {
    return data[index(c, t, w, h)];
  }
  bool operator==(const VideoClip&) const = default;
};

/// Spatial patch size s and temporal patch extent (1 = square patches,
/// 2 or 4 = cubic patches).
struct PatchGeometry {
  std::size_t patch = 16;
  std::size_t temporal = 1;
};

/// Token-lattice dimensions derived from clip shape and patch geometry.
struct PatchLattice {
  std::size_t frames = 0;    // T' = T / temporal extent
  std::size_t across_w = 0;  // W / s
  std::size_t across_h = 0;  // H / s
  std::size_t patch_dim = 0; // C * s^2 * temporal extent

  std::size_t per_frame() const { return across_w * across_h; }
  std::size_t total() const { return frames * per_frame(); }
};

PatchLattice patch_lattice(std::size_t channels, std::size_t frames,
                           std::size_t width, std::size_t height,
                           const PatchGeometry& geometry);

/// Flattens a clip into [(T/t)*P x C*s*s*t] rows: frame-block major, then
/// row-major over the W/s x H/s patch lattice. Within a patch the vector is
/// ordered (channel, frame offset, w offset, h offset). Lossless.
template <class Real>
Tensor<Real> patchify(const VideoClip& clip, const PatchGeometry& geometry);

/// Batched patchify: [B x (T/t)*P x patch_dim].
template <class Real>
Tensor<Real> patchify_batch(std::span<const VideoClip* const> clips,
                            const PatchGeometry& geometry);

/// Inverse of patchify.
template <class Real>
VideoClip unpatchify(const Tensor<Real>& patches, std::size_t channels,
                     std::size_t frames, std::size_t width, std::size_t height,
                     const PatchGeometry& geometry);

/// How embedded tokens are arranged.
///  Flat:   [T*P + 1]            one class token at index 0
///  Grid:   [(T+1) x (P+1)]      row 0 temporal class tokens, column 0
///                               spatial class tokens, (0,0) shared
///  Frames: [T x (P+1)]          one shared class token per frame, no
///                               temporal position
///  Axial:  [(T+1) x (Wp+1) x (Hp+1)]  class tokens wherever any index is 0
enum class TokenLayout { Flat, Grid, Frames, Axial };

/// Precomputed placement of patches, class tokens and positional-table rows
/// for one layout.
struct EmbedLayout {
  TokenLayout kind = TokenLayout::Grid;
  Shape token_shape;  // lattice shape without batch and channel axes
  std::size_t patch_count = 0;
  std::size_t class_count = 0;
  // Per token position: >= 0 is a patch index, < 0 encodes class row -1-c.
  std::vector<std::int64_t> source;
  std::vector<std::size_t> pos_table_rows;            // rows of each table
  std::vector<std::vector<std::size_t>> pos_index;    // per table, per token

  std::size_t positions() const { return source.size(); }
};

EmbedLayout make_embed_layout(TokenLayout kind, const PatchLattice& lattice);

template <class Real>
struct EmbedParams {
  Tensor<Real> weight;  // [patch_dim x C']
  Tensor<Real> bias;    // [C']
  Tensor<Real> cls;     // [class_count x C']
  std::vector<Tensor<Real>> pos;  // one [rows x C'] table per lattice axis
};

/// Class tokens and positional tables from N(0, 0.02^2); patch projection
/// from N(0, (1/sqrt(patch_dim))^2); zero bias.
template <class Real>
EmbedParams<Real> init_embed_params(const EmbedLayout& layout,
                                    std::size_t patch_dim, std::size_t width,
                                    std::mt19937_64& rng);

/// Places embedded patch tokens [B x patches x C'] and class rows into the
/// lattice and adds the positional tables. Result is
/// [B x token_shape... x C'].
template <class Real>
Tensor<Real> assemble_tokens(const Tensor<Real>& patch_tokens,
                             const Tensor<Real>& cls,
                             const std::vector<Tensor<Real>>& pos,
                             const EmbedLayout& layout);

/// Linear patch embedding followed by assemble_tokens.
template <class Real>
Tensor<Real> embed_and_position(const Tensor<Real>& patches,
                                const EmbedParams<Real>& params,
                                const EmbedLayout& layout);

}  // namespace vidtr
