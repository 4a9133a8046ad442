#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vidtr/model.hpp"
#include "vidtr/patch_embed.hpp"

namespace vidtr {

enum class Task { MovingDot, StaticShape };
enum class Split { Train, Test };

std::string to_string(Task task);
Task parse_task(const std::string& name);
std::string to_string(Split split);

/// Labelled synthetic clips. Train and test splits of the same seed draw
/// from disjoint generator streams.
struct SyntheticDataset {
  Task task = Task::MovingDot;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  std::size_t class_count = 0;
  std::vector<VideoClip> clips;
  std::vector<int> labels;

  std::size_t size() const { return clips.size(); }
  bool operator==(const SyntheticDataset&) const = default;
};

inline constexpr std::size_t kSynthFrames = 8;
inline constexpr std::size_t kSynthSide = 32;

/// 1x8x32x32 clips of a 3x3 dot moving 2 px/frame right, left, down or up
/// (labels 0..3), wrapping at the borders. Labels are balanced.
SyntheticDataset gen_moving_dot(std::uint64_t seed, std::size_t n,
                                Split split = Split::Train);
/// A filled 6x6 square, a 9x9 one-pixel cross or a 1x9 bar at a random
/// position, identical in all 8 frames (labels 0..2).
SyntheticDataset gen_static_shape(std::uint64_t seed, std::size_t n,
                                  Split split = Split::Train);
SyntheticDataset generate(Task task, std::uint64_t seed, std::size_t n,
                          Split split);

/// Binary dataset cache plus a text manifest next to it (<path>.manifest).
void save_dataset(const SyntheticDataset& data, const std::filesystem::path& path);
SyntheticDataset load_dataset(const std::filesystem::path& path);

enum class SampleMode { RandomPerChunk, Center };

/// Frame indices of TSN sampling: `count` equal chunks of `frames`, one
/// index per chunk. RandomPerChunk needs `rng`.
std::vector<std::size_t> tsn_indices(std::size_t frames, std::size_t count,
                                     SampleMode mode,
                                     std::mt19937_64* rng = nullptr);
VideoClip tsn_sample(const VideoClip& video, std::size_t count, SampleMode mode,
                     std::mt19937_64* rng = nullptr);

/// Mirror along the width axis.
VideoClip flip_horizontal(const VideoClip& clip);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  std::vector<std::size_t> milestones = {50, 80};
  std::uint64_t seed = 0;
  /// Rescale the whole gradient to at most this L2 norm (0 disables).
  double clip_norm = 1.0;
  /// Stop once test accuracy reaches this value (0 disables).
  double target_accuracy = 0.0;

  void validate() const;
};

/// key=value lines for the training keys; see set_model_key.
std::string train_config_text(const TrainConfig& config);
bool set_train_key(TrainConfig& config, const std::string& key,
                   const std::string& value);

struct EpochMetrics {
  std::size_t epoch = 0;
  Split split = Split::Train;
  double loss = 0;
  double accuracy = 0;
};

inline constexpr char kMetricsHeader[] = "epoch,split,loss,accuracy";
std::string metrics_csv_row(const EpochMetrics& m);

/// Raised when the loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SGD with momentum and weight decay on mean cross-entropy; the learning
/// rate drops 10x at each milestone. Static-shape clips are mirrored with
/// probability 1/2. Each epoch yields a train row (running loss and
/// accuracy over that epoch's batches) and, when `test` is given, a test
/// row; rows are returned and streamed to `csv` as they are produced.
std::vector<EpochMetrics> train(Model<float>& model, const SyntheticDataset& data,
                                const TrainConfig& config,
                                const SyntheticDataset* test = nullptr,
                                std::ostream* csv = nullptr);

/// v <- momentum * v + (g + weight_decay * p); p <- p - lr * v, where g is
/// first rescaled so its global L2 norm is at most clip_norm (if > 0).
class SgdOptimizer {
 public:
  SgdOptimizer(NamedTensors<float> params, double momentum, double weight_decay,
               double clip_norm = 0.0);
  /// Returns the gradient norm before clipping.
  double step(double lr);
  void zero_grad();

 private:
  NamedTensors<float> params_;
  std::vector<std::vector<float>> velocity_;
  double momentum_;
  double weight_decay_;
  double clip_norm_;
};

/// n_temporal windows x n_spatial crops (1 or 3) per clip.
struct ViewSpec {
  std::size_t temporal = 1;
  std::size_t spatial = 1;
};
ViewSpec parse_views(const std::string& text);  // "10x3"

/// The crops fed to the model for one source clip, temporal-major.
std::vector<VideoClip> make_views(const VideoClip& source, const ModelConfig& config,
                                  const ViewSpec& views);

struct EvalResult {
  double accuracy = 0;
  double loss = 0;  // mean -log p(label) of the averaged probabilities
  std::vector<double> class_accuracy;
  std::vector<std::size_t> class_count;
  std::vector<std::vector<double>> probabilities;  // per clip, view-averaged
};

/// Softmax per view, probabilities averaged over views, argmax vs label.
template <class Real>
EvalResult evaluate(const Model<Real>& model, const SyntheticDataset& data,
                    const ViewSpec& views = {}, std::size_t batch_size = 32);

/// Entrywise mean of two probability vectors.
std::vector<double> ensemble_average(std::span<const double> p1,
                                     std::span<const double> p2);
/// Softmax of the mean of two logit vectors.
std::vector<double> ensemble_logits(std::span<const double> l1,
                                    std::span<const double> l2);

}  // namespace vidtr
