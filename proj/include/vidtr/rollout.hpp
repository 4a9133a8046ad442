#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "vidtr/attention.hpp"
#include "vidtr/model.hpp"
#include "vidtr/tensor.hpp"

// Attention rollout for separable models: per-layer affinities are reduced
// over heads and multiplied across layers, later layers on the left, so a
// row of the product reads "final token <- input tokens".

namespace vidtr {

enum class HeadReduce { Mean, Max };

struct RolloutOptions {
  HeadReduce heads = HeadReduce::Mean;
  /// Replace every factor A by (A + I) / 2 with rows re-normalized.
  bool residual_adjust = false;
};

struct RolloutMasks {
  TensorD mask_t;  // [(P+1) x (T+1) x (T+1)]
  TensorD mask_s;  // [(T+1) x (P+1) x (P+1)]
};

/// Accumulates the maps of one batch element. Every layer must keep the
/// temporal extent (no down-sampling); otherwise UnsupportedConfiguration.
template <class Real>
RolloutMasks accumulate(const std::vector<AttentionMaps<Real>>& maps,
                        std::size_t batch_index = 0,
                        const RolloutOptions& options = {});

/// mask_t' = mask_t[1:, 0, 1:] as [P x T]; mask_s' = mask_s[1:, 0, 1:] as
/// [T x P].
struct ClassSlices {
  TensorD mask_t;
  TensorD mask_s;
};
ClassSlices class_slices(const TensorD& mask_t, const TensorD& mask_s);

/// transpose(mask_t') entrywise-times mask_s', [T x P].
TensorD combine(const TensorD& mask_t_slice, const TensorD& mask_s_slice);

/// Number of entries kept when thresholding n values at `fraction`:
/// ceil(fraction * n), with products within 1e-9 of an integer taken as
/// that integer (0.3 * 10 is 3, not 4).
std::size_t threshold_count(double fraction, std::size_t n);

/// Flags the threshold_count(fraction, n) largest entries; ties go to the
/// lower flat index.
std::vector<bool> threshold_top(const TensorD& mask, double fraction = 0.30);

/// Writes frame_0000.pgm... (binary P5, patch cells upscaled to
/// patch x patch blocks) and mask.csv ("t,patch,value") into `out_dir`.
/// With `selected` the frames are binary (255 = selected); otherwise the
/// mask is scaled linearly so its maximum is 255.
void render(const TensorD& mask, const std::vector<bool>* selected,
            std::size_t across_w, std::size_t across_h, std::size_t patch,
            const std::filesystem::path& out_dir);

struct RolloutResult {
  RolloutMasks masks;
  ClassSlices slices;
  TensorD mask_st;
  std::vector<bool> selected;
};

/// Full pipeline for one clip through a separable model.
RolloutResult rollout(const Model<float>& model, const VideoClip& clip,
                      double fraction = 0.30, const RolloutOptions& options = {});

}  // namespace vidtr
