#include "vidtr/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "vidtr/ops.hpp"

namespace vidtr {

namespace {

std::mt19937_64 stream_for(Task task, Split split, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(task) + 1u,
                    split == Split::Train ? 0x7a11u : 0x7e57u};
  return std::mt19937_64(seq);
}

// Balanced labels in a seeded random order.
std::vector<int> balanced_labels(std::size_t n, std::size_t classes,
                                 std::mt19937_64& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

std::size_t uniform_below(std::mt19937_64& rng, std::size_t bound) {
  return std::uniform_int_distribution<std::size_t>(0, bound - 1)(rng);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || !std::isfinite(out))
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" +
                      value + "'");
  return static_cast<std::size_t>(std::stoull(v));
}

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}

constexpr char kDatasetMagic[] = "VDSET1";

}  // namespace

std::string to_string(Task task) {
  return task == Task::MovingDot ? "moving_dot" : "static_shape";
}

Task parse_task(const std::string& name) {
  if (name == "moving_dot") return Task::MovingDot;
  if (name == "static_shape") return Task::StaticShape;
  throw ConfigError("unknown task '" + name + "' (moving_dot|static_shape)");
}

std::string to_string(Split split) {
  return split == Split::Train ? "train" : "test";
}

SyntheticDataset gen_moving_dot(std::uint64_t seed, std::size_t n, Split split) {
  if (n < 8) throw ConfigError("moving_dot needs n >= 8");
  auto rng = stream_for(Task::MovingDot, split, seed);
  SyntheticDataset data{Task::MovingDot, split, seed, 4, {}, {}};
  data.labels = balanced_labels(n, 4, rng);
  const int dw[4] = {1, -1, 0, 0};
  const int dh[4] = {0, 0, 1, -1};
  const int side = static_cast<int>(kSynthSide);
  for (std::size_t i = 0; i < n; ++i) {
    VideoClip clip(1, kSynthFrames, kSynthSide, kSynthSide);
    const int w0 = static_cast<int>(uniform_below(rng, kSynthSide));
    const int h0 = static_cast<int>(uniform_below(rng, kSynthSide));
    const int label = data.labels[i];
    for (std::size_t t = 0; t < kSynthFrames; ++t) {
      const int step = 2 * static_cast<int>(t);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const int w = ((w0 + dw[label] * step + a) % side + side) % side;
          const int h = ((h0 + dh[label] * step + b) % side + side) % side;
          clip.at(0, t, static_cast<std::size_t>(w), static_cast<std::size_t>(h)) = 1.0f;
        }
    }
    data.clips.push_back(std::move(clip));
  }
  return data;
}

SyntheticDataset gen_static_shape(std::uint64_t seed, std::size_t n, Split split) {
  if (n < 8) throw ConfigError("static_shape needs n >= 8");
  auto rng = stream_for(Task::StaticShape, split, seed);
  SyntheticDataset data{Task::StaticShape, split, seed, 3, {}, {}};
  data.labels = balanced_labels(n, 3, rng);
  // Bounding boxes (w extent, h extent) per class.
  const std::size_t box_w[3] = {6, 9, 1};
  const std::size_t box_h[3] = {6, 9, 9};
  for (std::size_t i = 0; i < n; ++i) {
    VideoClip clip(1, kSynthFrames, kSynthSide, kSynthSide);
    const int label = data.labels[i];
    const std::size_t w0 = uniform_below(rng, kSynthSide - box_w[label] + 1);
    const std::size_t h0 = uniform_below(rng, kSynthSide - box_h[label] + 1);
    for (std::size_t t = 0; t < kSynthFrames; ++t)
      for (std::size_t a = 0; a < box_w[label]; ++a)
        for (std::size_t b = 0; b < box_h[label]; ++b) {
          const bool on = label != 1 || a == 4 || b == 4;
          if (on) clip.at(0, t, w0 + a, h0 + b) = 1.0f;
        }
    data.clips.push_back(std::move(clip));
  }
  return data;
}

SyntheticDataset generate(Task task, std::uint64_t seed, std::size_t n,
                          Split split) {
  return task == Task::MovingDot ? gen_moving_dot(seed, n, split)
                                 : gen_static_shape(seed, n, split);
}

void save_dataset(const SyntheticDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  out.write(kDatasetMagic, 6);
  put_u32(out, static_cast<std::uint32_t>(data.task));
  put_u32(out, static_cast<std::uint32_t>(data.split));
  put_u64(out, data.seed);
  put_u32(out, static_cast<std::uint32_t>(data.class_count));
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& c = data.clips[i];
    put_u32(out, static_cast<std::uint32_t>(data.labels[i]));
    put_u32(out, static_cast<std::uint32_t>(c.channels));
    put_u32(out, static_cast<std::uint32_t>(c.frames));
    put_u32(out, static_cast<std::uint32_t>(c.width));
    put_u32(out, static_cast<std::uint32_t>(c.height));
    out.write(reinterpret_cast<const char*>(c.data.data()),
              static_cast<std::streamsize>(c.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());

  std::vector<std::size_t> counts(data.class_count, 0);
  for (int l : data.labels) ++counts[static_cast<std::size_t>(l)];
  std::ofstream manifest(path.string() + ".manifest");
  manifest << "task=" << to_string(data.task) << '\n'
           << "split=" << to_string(data.split) << '\n'
           << "seed=" << data.seed << '\n'
           << "n=" << data.size() << '\n'
           << "classes=" << data.class_count << '\n'
           << "class_counts=";
  for (std::size_t k = 0; k < counts.size(); ++k)
    manifest << (k ? "," : "") << counts[k];
  manifest << '\n';
}

SyntheticDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in),
                          std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n)
      throw std::runtime_error(path.string() + ": truncated dataset file");
  };
  auto u32 = [&]() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  };
  need(6);
  if (bytes.compare(0, 6, kDatasetMagic) != 0)
    throw std::runtime_error(path.string() + ": not a dataset cache");
  pos = 6;
  SyntheticDataset data;
  const std::uint32_t task = u32(), split = u32();
  if (task > 1 || split > 1)
    throw std::runtime_error(path.string() + ": bad task or split tag");
  data.task = static_cast<Task>(task);
  data.split = static_cast<Split>(split);
  need(8);
  std::memcpy(&data.seed, bytes.data() + pos, 8);
  pos += 8;
  data.class_count = u32();
  const std::uint32_t n = u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    data.labels.push_back(static_cast<int>(u32()));
    const std::size_t c = u32(), t = u32(), w = u32(), h = u32();
    VideoClip clip(c, t, w, h);
    need(clip.data.size() * sizeof(float));
    std::memcpy(clip.data.data(), bytes.data() + pos, clip.data.size() * sizeof(float));
    pos += clip.data.size() * sizeof(float);
    data.clips.push_back(std::move(clip));
  }
  if (pos != bytes.size())
    throw std::runtime_error(path.string() + ": trailing bytes in dataset file");
  return data;
}

std::vector<std::size_t> tsn_indices(std::size_t frames, std::size_t count,
                                     SampleMode mode, std::mt19937_64* rng) {
  if (count == 0) throw ConfigError("tsn_sample: count must be positive");
  if (frames < count)
    throw DimensionError("tsn_sample: " + std::to_string(frames) +
                         " frames cannot supply " + std::to_string(count) +
                         " samples");
  if (mode == SampleMode::RandomPerChunk && !rng)
    throw ConfigError("tsn_sample: random mode needs a generator");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t begin = i * frames / count, end = (i + 1) * frames / count;
    if (mode == SampleMode::Center)
      out.push_back(begin + (end - begin) / 2);
    else
      out.push_back(begin + uniform_below(*rng, end - begin));
  }
  return out;
}

VideoClip tsn_sample(const VideoClip& video, std::size_t count, SampleMode mode,
                     std::mt19937_64* rng) {
  const auto idx = tsn_indices(video.frames, count, mode, rng);
  VideoClip out(video.channels, count, video.width, video.height);
  const std::size_t plane = video.width * video.height;
  for (std::size_t c = 0; c < video.channels; ++c)
    for (std::size_t t = 0; t < count; ++t)
      std::copy_n(video.data.begin() + video.index(c, idx[t], 0, 0), plane,
                  out.data.begin() + out.index(c, t, 0, 0));
  return out;
}

VideoClip flip_horizontal(const VideoClip& clip) {
  VideoClip out = clip;
  for (std::size_t c = 0; c < clip.channels; ++c)
    for (std::size_t t = 0; t < clip.frames; ++t)
      for (std::size_t w = 0; w < clip.width; ++w)
        for (std::size_t h = 0; h < clip.height; ++h)
          out.at(c, t, w, h) = clip.at(c, t, clip.width - 1 - w, h);
  return out;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (lr < 0) throw ConfigError("lr must be non-negative");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] >= epochs)
      throw ConfigError("milestone " + std::to_string(milestones[i]) +
                        " is not below epochs " + std::to_string(epochs));
    if (i > 0 && milestones[i] <= milestones[i - 1])
      throw ConfigError("milestones must be strictly increasing");
  }
  if (clip_norm < 0) throw ConfigError("clip_norm must be non-negative");
  if (target_accuracy < 0 || target_accuracy > 1)
    throw ConfigError("target_accuracy must lie in [0, 1]");
}

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string train_config_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "epochs=" << c.epochs << '\n'
     << "batch_size=" << c.batch_size << '\n'
     << "lr=" << shortest(c.lr) << '\n'
     << "momentum=" << shortest(c.momentum) << '\n'
     << "weight_decay=" << shortest(c.weight_decay) << '\n'
     << "milestones=";
  for (std::size_t i = 0; i < c.milestones.size(); ++i)
    os << (i ? "," : "") << c.milestones[i];
  os << '\n'
     << "seed=" << c.seed << '\n'
     << "clip_norm=" << shortest(c.clip_norm) << '\n'
     << "target_accuracy=" << shortest(c.target_accuracy) << '\n';
  return os.str();
}

bool set_train_key(TrainConfig& c, const std::string& key,
                   const std::string& value) {
  if (key == "epochs") {
    c.epochs = parse_count(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_count(key, value);
  } else if (key == "lr") {
    c.lr = parse_real(key, value);
  } else if (key == "momentum") {
    c.momentum = parse_real(key, value);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_real(key, value);
  } else if (key == "milestones") {
    c.milestones.clear();
    std::stringstream ss(trim(value));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!trim(item).empty()) c.milestones.push_back(parse_count(key, item));
  } else if (key == "seed") {
    c.seed = parse_count(key, value);
  } else if (key == "clip_norm") {
    c.clip_norm = parse_real(key, value);
  } else if (key == "target_accuracy") {
    c.target_accuracy = parse_real(key, value);
  } else {
    return false;
  }
  return true;
}

std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,%.4f", m.epoch,
                to_string(m.split).c_str(), m.loss, m.accuracy);
  return buf;
}

SgdOptimizer::SgdOptimizer(NamedTensors<float> params, double momentum,
                           double weight_decay, double clip_norm)
    : params_(std::move(params)),
      momentum_(momentum),
      weight_decay_(weight_decay),
      clip_norm_(clip_norm) {
  for (const auto& [name, t] : params_) velocity_.emplace_back(t.size(), 0.0f);
}

void SgdOptimizer::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

double SgdOptimizer::step(double lr) {
  double sq = 0;
  for (const auto& [name, p] : params_)
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  const float gain = clip_norm_ > 0 && norm > clip_norm_
                         ? static_cast<float>(clip_norm_ / norm)
                         : 1.0f;
  const float mu = static_cast<float>(momentum_);
  const float wd = static_cast<float>(weight_decay_);
  const float rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<float> p = params_[i].second;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto v = p.mutable_values();
    auto& vel = velocity_[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      vel[j] = mu * vel[j] + (gain * g[j] + wd * v[j]);
      v[j] -= rate * vel[j];
    }
  }
  return norm;
}

std::vector<EpochMetrics> train(Model<float>& model, const SyntheticDataset& data,
                                const TrainConfig& config,
                                const SyntheticDataset* test, std::ostream* csv) {
  config.validate();
  if (data.size() == 0) throw ConfigError("train: empty dataset");
  if (data.class_count != model.config().class_count)
    throw ConfigError("train: dataset has " + std::to_string(data.class_count) +
                      " classes, model has " +
                      std::to_string(model.config().class_count));

  SgdOptimizer opt(model.parameters(), config.momentum, config.weight_decay,
                   config.clip_norm);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const bool flip = data.task == Task::StaticShape;
  const std::size_t K = data.class_count;

  std::vector<EpochMetrics> metrics;
  if (csv) *csv << kMetricsHeader << '\n';
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double lr = config.lr;
    for (std::size_t m : config.milestones)
      if (epoch > m) lr *= 0.1;
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 0; start < order.size();
         start += config.batch_size, ++batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<VideoClip> flipped;
      flipped.reserve(stop - start);
      std::vector<const VideoClip*> clips;
      std::vector<int> labels;
      for (std::size_t i = start; i < stop; ++i) {
        const VideoClip* clip = &data.clips[order[i]];
        if (flip && (rng() & 1u)) {
          flipped.push_back(flip_horizontal(*clip));
          clip = &flipped.back();
        }
        clips.push_back(clip);
        labels.push_back(data.labels[order[i]]);
      }
      auto logits = model.forward(clips);
      auto loss = cross_entropy(logits, labels);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batch));
      opt.zero_grad();
      loss.backward();
      opt.step(lr);

      loss_sum += value * static_cast<double>(clips.size());
      auto lv = logits.values();
      for (std::size_t b = 0; b < clips.size(); ++b) {
        const auto row = lv.subspan(b * K, K);
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        if (best == labels[b]) ++correct;
      }
    }
    EpochMetrics row{epoch, Split::Train, loss_sum / data.size(),
                     static_cast<double>(correct) / data.size()};
    metrics.push_back(row);
    if (csv) *csv << metrics_csv_row(row) << '\n';

    bool reached = false;
    if (test) {
      const EvalResult r = evaluate(model, *test);
      EpochMetrics t{epoch, Split::Test, r.loss, r.accuracy};
      metrics.push_back(t);
      if (csv) *csv << metrics_csv_row(t) << '\n';
      reached = config.target_accuracy > 0 && r.accuracy >= config.target_accuracy;
    }
    if (csv) csv->flush();
    if (reached) break;
  }
  return metrics;
}

ViewSpec parse_views(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos)
    throw ConfigError("views must look like TxS, e.g. 10x3, got '" + text + "'");
  ViewSpec v{parse_count("views", text.substr(0, x)),
             parse_count("views", text.substr(x + 1))};
  if (v.temporal == 0) throw ConfigError("views: temporal count must be positive");
  if (v.spatial != 1 && v.spatial != 3)
    throw ConfigError("views: spatial count must be 1 or 3");
  return v;
}

std::vector<VideoClip> make_views(const VideoClip& source, const ModelConfig& config,
                                  const ViewSpec& views) {
  const std::size_t T = config.clip_len, W = config.frame_width,
                    H = config.frame_height;
  if (source.channels != config.channels || source.frames < T ||
      source.width < W || source.height < H)
    throw DimensionError("make_views: source clip is smaller than the model input");
  const std::size_t slack_t = source.frames - T, slack_w = source.width - W,
                    slack_h = source.height - H;

  std::vector<std::size_t> t_off;
  for (std::size_t i = 0; i < views.temporal; ++i)
    t_off.push_back(views.temporal == 1 ? slack_t / 2
                                        : i * slack_t / (views.temporal - 1));
  std::vector<std::pair<std::size_t, std::size_t>> s_off;
  if (views.spatial == 1) {
    s_off.emplace_back(slack_w / 2, slack_h / 2);
  } else if (slack_w >= slack_h) {
    for (std::size_t w : {std::size_t{0}, slack_w / 2, slack_w})
      s_off.emplace_back(w, slack_h / 2);
  } else {
    for (std::size_t h : {std::size_t{0}, slack_h / 2, slack_h})
      s_off.emplace_back(slack_w / 2, h);
  }

  std::vector<VideoClip> out;
  for (std::size_t t0 : t_off)
    for (auto [w0, h0] : s_off) {
      VideoClip v(config.channels, T, W, H);
      for (std::size_t c = 0; c < config.channels; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t w = 0; w < W; ++w)
            std::copy_n(source.data.begin() + source.index(c, t0 + t, w0 + w, h0), H,
                        v.data.begin() + v.index(c, t, w, 0));
      out.push_back(std::move(v));
    }
  return out;
}

template <class Real>
EvalResult evaluate(const Model<Real>& model, const SyntheticDataset& data,
                    const ViewSpec& views, std::size_t batch_size) {
  NoGradGuard no_grad;
  const std::size_t K = model.config().class_count;
  if (data.class_count != K)
    throw ConfigError("evaluate: dataset has " + std::to_string(data.class_count) +
                      " classes, model has " + std::to_string(K));
  const std::size_t per_clip = views.temporal * views.spatial;
  EvalResult r;
  r.class_accuracy.assign(K, 0.0);
  r.class_count.assign(K, 0);
  r.probabilities.assign(data.size(), std::vector<double>(K, 0.0));

  const std::size_t clips_per_batch = std::max<std::size_t>(1, batch_size / per_clip);
  std::size_t correct = 0;
  double nll = 0;
  for (std::size_t start = 0; start < data.size(); start += clips_per_batch) {
    const std::size_t stop = std::min(data.size(), start + clips_per_batch);
    std::vector<VideoClip> all;
    for (std::size_t i = start; i < stop; ++i) {
      auto v = make_views(data.clips[i], model.config(), views);
      std::move(v.begin(), v.end(), std::back_inserter(all));
    }
    std::vector<const VideoClip*> ptrs;
    for (const auto& v : all) ptrs.push_back(&v);
    const auto probs = probabilities(model.forward(ptrs));
    for (std::size_t i = start; i < stop; ++i) {
      auto& avg = r.probabilities[i];
      for (std::size_t v = 0; v < per_clip; ++v) {
        const std::size_t row = (i - start) * per_clip + v;
        for (std::size_t k = 0; k < K; ++k)
          avg[k] += static_cast<double>(probs[row * K + k]);
      }
      for (auto& p : avg) p /= static_cast<double>(per_clip);
      const int label = data.labels[i];
      const auto best = std::max_element(avg.begin(), avg.end()) - avg.begin();
      const bool hit = best == label;
      correct += hit;
      r.class_count[static_cast<std::size_t>(label)] += 1;
      r.class_accuracy[static_cast<std::size_t>(label)] += hit;
      nll -= std::log(std::max(avg[static_cast<std::size_t>(label)], 1e-300));
    }
  }
  for (std::size_t k = 0; k < K; ++k)
    if (r.class_count[k]) r.class_accuracy[k] /= static_cast<double>(r.class_count[k]);
  r.accuracy = data.size() ? static_cast<double>(correct) / data.size() : 0.0;
  r.loss = data.size() ? nll / data.size() : 0.0;
  return r;
}

template EvalResult evaluate(const Model<float>&, const SyntheticDataset&,
                             const ViewSpec&, std::size_t);
template EvalResult evaluate(const Model<double>&, const SyntheticDataset&,
                             const ViewSpec&, std::size_t);

std::vector<double> ensemble_average(std::span<const double> p1,
                                     std::span<const double> p2) {
  if (p1.size() != p2.size())
    throw DimensionError("ensemble_average: " + std::to_string(p1.size()) +
                         " vs " + std::to_string(p2.size()) + " classes");
  std::vector<double> out(p1.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (p1[i] + p2[i]);
  return out;
}

std::vector<double> ensemble_logits(std::span<const double> l1,
                                    std::span<const double> l2) {
  auto mean = ensemble_average(l1, l2);
  const double peak = *std::max_element(mean.begin(), mean.end());
  double total = 0;
  for (auto& v : mean) total += (v = std::exp(v - peak));
  for (auto& v : mean) v /= total;
  return mean;
}

}  // namespace vidtr
