#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vidtr/attention.hpp"
#include "vidtr/patch_embed.hpp"
#include "vidtr/temporal_pool.hpp"
#include "vidtr/tensor.hpp"

namespace vidtr {

/// Architecture of one VidTr permutation. Down-sample layer indices are
/// 0-based encoder positions; pooling runs inside that layer's temporal
/// attention.
struct ModelConfig {
  std::size_t clip_len = 8;
  std::size_t sample_rate = 8;
  std::size_t frame_width = 32;
  std::size_t frame_height = 32;
  std::size_t channels = 1;
  std::size_t patch = 8;
  std::size_t temporal_patch = 1;
  std::size_t embed_dim = 32;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 64;
  Factorization factorization = Factorization::Separable;
  PoolKind pool = PoolKind::None;
  std::vector<std::size_t> downsample_layers;
  std::vector<std::size_t> downsample_taus;
  std::size_t class_count = 4;

  bool operator==(const ModelConfig&) const = default;

  /// Throws ConfigError naming the first violated rule.
  void validate() const;

  PatchGeometry geometry() const { return {patch, temporal_patch}; }
  PatchLattice lattice() const;
  /// Temporal token count T' after temporal patching.
  std::size_t temporal_tokens() const { return clip_len / temporal_patch; }
  /// Pooling applied inside layer `layer` (kind None when not scheduled).
  PoolSpec pool_at(std::size_t layer) const;
  /// Temporal extent, class row included, after every layer.
  std::vector<std::size_t> temporal_extents() const;
  bool compact() const { return !downsample_layers.empty(); }
};

/// Named presets: vidtr_s, vidtr_m, vidtr_l, c_vidtr_s, c_vidtr_m, toy.
ModelConfig model_preset(const std::string& name);
std::vector<std::string> model_preset_names();

/// key=value lines in a fixed key order; lists are comma separated.
std::string model_config_text(const ModelConfig& config);
/// Sets one key; returns false if the key is not a model key. Throws
/// ConfigError on a malformed value.
bool set_model_key(ModelConfig& config, const std::string& key,
                   const std::string& value);
/// Parses model_config_text output (and comments/blank lines). Unknown keys
/// are rejected. The result is validated.
ModelConfig parse_model_config(const std::string& text);

TokenLayout layout_for(Factorization kind);

template <class Real>
class Model {
 public:
  Model() = default;

  /// Deterministic initialization from `seed`.
  static Model build(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const EmbedLayout& layout() const { return layout_; }

  /// Every parameter with a stable dotted name, in checkpoint order.
  NamedTensors<Real> parameters() const;
  std::size_t parameter_count() const;

  /// Embedded and encoded token lattice [B x lattice... x C'] for a batch
  /// of clips. Per-layer maps are recorded when `maps` is given.
  Tensor<Real> encode(std::span<const VideoClip* const> clips,
                      std::vector<AttentionMaps<Real>>* maps = nullptr) const;
  /// The feature the head reads: the (0,0) token for grid kinds, the class
  /// token for flat sequences, the frame-averaged class tokens for
  /// spatial-only. [B x C'].
  Tensor<Real> class_feature(const Tensor<Real>& encoded) const;
  /// Linear head over class features, [B x classes].
  Tensor<Real> head(const Tensor<Real>& features) const;

  /// Logits [B x classes].
  Tensor<Real> forward(std::span<const VideoClip* const> clips,
                       std::vector<AttentionMaps<Real>>* maps = nullptr) const;
  /// Logits [classes] of one clip.
  Tensor<Real> forward(const VideoClip& clip,
                       std::vector<AttentionMaps<Real>>* maps = nullptr) const;

  /// Direct access for tests and tools.
  EmbedParams<Real>& embed() { return embed_; }
  std::vector<EncoderLayerParams<Real>>& layers() { return layers_; }
  Tensor<Real>& head_weight() { return head_w_; }
  Tensor<Real>& head_bias() { return head_b_; }

 private:
  void check_clip(const VideoClip& clip) const;

  ModelConfig config_;
  EmbedLayout layout_;
  EmbedParams<Real> embed_;
  std::vector<EncoderLayerParams<Real>> layers_;
  Tensor<Real> head_w_;
  Tensor<Real> head_b_;
};

extern template class Model<float>;
extern template class Model<double>;

inline constexpr char kCheckpointMagic[] = "VIDTR1";
inline constexpr std::size_t kCheckpointMagicSize = 6;

/// Checkpoint layout, all integers little-endian uint32:
///   "VIDTR1" | config length | config text | tensor count |
///   per tensor: name length | name | rank | extents | float32 values
/// Double-precision models are narrowed to float32 on save.
template <class Real>
void save_checkpoint(const Model<Real>& model,
                     const std::filesystem::path& path);

/// Builds a model from the stored config and loads every tensor.
template <class Real>
Model<Real> load_checkpoint(const std::filesystem::path& path);

/// Loads into an existing model; the stored config must equal the model's.
template <class Real>
void load_checkpoint_into(Model<Real>& model,
                          const std::filesystem::path& path);

/// Reads only the config block.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace vidtr
