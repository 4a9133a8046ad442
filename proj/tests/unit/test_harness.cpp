#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "vidtr/harness.hpp"
#include "vidtr/ops.hpp"

using namespace vidtr;
using vidtr::testing::random_clip;

namespace fs = std::filesystem;

namespace {

std::set<std::pair<std::size_t, std::size_t>> lit(const VideoClip& c, std::size_t t) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t w = 0; w < c.width; ++w)
    for (std::size_t h = 0; h < c.height; ++h)
      if (c.at(0, t, w, h) != 0.0f) out.insert({w, h});
  return out;
}

ModelConfig small_input_config() {
  auto c = model_preset("toy");
  c.clip_len = 4;
  c.frame_width = 16;
  c.frame_height = 16;
  return c;
}

}  // namespace

TEST(Synthetic, DeterministicAndSeedSensitive) {
  EXPECT_EQ(gen_moving_dot(3, 40), gen_moving_dot(3, 40));
  EXPECT_EQ(gen_static_shape(3, 40, Split::Test), gen_static_shape(3, 40, Split::Test));
  EXPECT_NE(gen_moving_dot(3, 40).clips, gen_moving_dot(4, 40).clips);
  EXPECT_NE(gen_moving_dot(3, 40, Split::Train).clips, gen_moving_dot(3, 40, Split::Test).clips);
  EXPECT_NE(gen_moving_dot(3, 40, Split::Train).labels, gen_moving_dot(3, 40, Split::Test).labels);
  EXPECT_THROW(gen_moving_dot(0, 7), ConfigError);
  EXPECT_EQ(generate(Task::StaticShape, 1, 9, Split::Train).class_count, 3u);
}

TEST(Synthetic, LabelsAreBalanced) {
  for (std::size_t n : {8u, 9u, 101u, 400u}) {
    for (auto task : {Task::MovingDot, Task::StaticShape}) {
      const auto d = generate(task, 5, n, Split::Train);
      std::vector<std::size_t> counts(d.class_count, 0);
      for (int l : d.labels) ++counts[static_cast<std::size_t>(l)];
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      EXPECT_LE(*hi - *lo, 1u);
    }
  }
}

TEST(Synthetic, MovingDotFollowsItsDirection) {
  const auto d = gen_moving_dot(11, 200);
  const int dw[4] = {1, -1, 0, 0}, dh[4] = {0, 0, 1, -1};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& c = d.clips[i];
    ASSERT_EQ(c.channels, 1u);
    ASSERT_EQ(c.frames, 8u);
    const auto first = lit(c, 0);
    ASSERT_EQ(first.size(), 9u);
    const int label = d.labels[i];
    for (std::size_t t = 1; t < 8; ++t) {
      std::set<std::pair<std::size_t, std::size_t>> moved;
      for (auto [w, h] : first)
        moved.insert({static_cast<std::size_t>((static_cast<int>(w) + 2 * dw[label] * static_cast<int>(t) + 64) % 32),
                      static_cast<std::size_t>((static_cast<int>(h) + 2 * dh[label] * static_cast<int>(t) + 64) % 32)});
      ASSERT_EQ(lit(c, t), moved) << "clip " << i << " frame " << t;
    }
  }
}

TEST(Synthetic, StaticShapesAreStillAndSized) {
  const auto d = gen_static_shape(12, 120);
  const std::size_t area[3] = {36, 17, 9};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto first = lit(d.clips[i], 0);
    ASSERT_EQ(first.size(), area[d.labels[i]]);
    for (std::size_t t = 1; t < 8; ++t) ASSERT_EQ(lit(d.clips[i], t), first);
  }
}

TEST(Synthetic, CacheRoundTripAndManifest) {
  const auto path = fs::temp_directory_path() / "vidtr_harness_cache.bin";
  const auto d = gen_static_shape(7, 30, Split::Test);
  save_dataset(d, path);
  EXPECT_EQ(load_dataset(path), d);
  std::ifstream m(path.string() + ".manifest");
  std::stringstream text;
  text << m.rdbuf();
  EXPECT_EQ(text.str(),
            "task=static_shape\nsplit=test\nseed=7\nn=30\nclasses=3\nclass_counts=10,10,10\n");
  {
    std::ofstream junk(path, std::ios::binary | std::ios::app);
    junk << "x";
  }
  EXPECT_THROW(load_dataset(path), std::runtime_error);
  fs::remove(path);
  fs::remove(path.string() + ".manifest");
}

TEST(Tsn, IndicesCoverEqualChunks) {
  EXPECT_EQ(tsn_indices(16, 8, SampleMode::Center),
            (std::vector<std::size_t>{1, 3, 5, 7, 9, 11, 13, 15}));
  EXPECT_EQ(tsn_indices(8, 8, SampleMode::Center),
            (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t count = 1 + rng() % 8, frames = count + rng() % 40;
    const auto idx = tsn_indices(frames, count, SampleMode::RandomPerChunk, &rng);
    ASSERT_EQ(idx.size(), count);
    for (std::size_t i = 0; i < count; ++i) {
      ASSERT_GE(idx[i], i * frames / count);
      ASSERT_LT(idx[i], (i + 1) * frames / count);
    }
  }
  EXPECT_THROW(tsn_indices(4, 8, SampleMode::Center), DimensionError);
  EXPECT_THROW(tsn_indices(8, 4, SampleMode::RandomPerChunk), ConfigError);
}

TEST(Tsn, SampleCopiesChosenFrames) {
  std::mt19937_64 rng(14);
  const auto video = random_clip(2, 12, 4, 3, rng);
  const auto clip = tsn_sample(video, 3, SampleMode::Center);
  ASSERT_EQ(clip.frames, 3u);
  const std::size_t picks[3] = {2, 6, 10};
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t w = 0; w < 4; ++w)
        for (std::size_t h = 0; h < 3; ++h)
          ASSERT_EQ(clip.at(c, t, w, h), video.at(c, picks[t], w, h));
}

TEST(Augment, FlipMirrorsWidthAndIsAnInvolution) {
  std::mt19937_64 rng(15);
  const auto clip = random_clip(2, 3, 5, 4, rng);
  const auto f = flip_horizontal(clip);
  EXPECT_EQ(f.at(1, 2, 0, 3), clip.at(1, 2, 4, 3));
  EXPECT_EQ(flip_horizontal(f), clip);
}

TEST(Views, ParseAndCropOffsets) {
  EXPECT_EQ(parse_views("10x3").temporal, 10u);
  EXPECT_EQ(parse_views("10x3").spatial, 3u);
  EXPECT_THROW(parse_views("10"), ConfigError);
  EXPECT_THROW(parse_views("0x1"), ConfigError);
  EXPECT_THROW(parse_views("2x2"), ConfigError);

  std::mt19937_64 rng(16);
  const auto source = random_clip(1, 8, 32, 24, rng);
  const auto cfg = small_input_config();
  const auto views = make_views(source, cfg, {3, 3});
  ASSERT_EQ(views.size(), 9u);
  // temporal offsets 0, 2, 4; width slack 16 > height slack 8 -> crops along w
  const std::size_t t_off[3] = {0, 2, 4}, w_off[3] = {0, 8, 16};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const auto& v = views[i * 3 + j];
      ASSERT_EQ(v.frames, 4u);
      EXPECT_EQ(v.at(0, 1, 2, 3), source.at(0, t_off[i] + 1, w_off[j] + 2, 4 + 3));
    }
  const auto centre = make_views(source, cfg, {}).front();
  EXPECT_EQ(centre.at(0, 0, 0, 0), source.at(0, 2, 8, 4));
  EXPECT_THROW(make_views(random_clip(1, 2, 32, 32, rng), cfg, {}), DimensionError);
}

TEST(Evaluate, ProbabilitiesFormASimplex) {
  const auto data = gen_moving_dot(2, 24, Split::Test);
  auto model = Model<float>::build(model_preset("toy"), 1);
  const auto r = evaluate(model, data, {}, 5);
  ASSERT_EQ(r.probabilities.size(), 24u);
  double nll = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 24; ++i) {
    double total = 0;
    for (double p : r.probabilities[i]) {
      EXPECT_GE(p, 0.0);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
    const auto& p = r.probabilities[i];
    const auto best = std::max_element(p.begin(), p.end()) - p.begin();
    correct += best == data.labels[i];
    nll -= std::log(p[static_cast<std::size_t>(data.labels[i])]);
  }
  EXPECT_DOUBLE_EQ(r.accuracy, correct / 24.0);
  EXPECT_NEAR(r.loss, nll / 24, 1e-12);
  EXPECT_EQ(r.class_count, (std::vector<std::size_t>{6, 6, 6, 6}));
}

TEST(Evaluate, SingleViewMatchesPlainInference) {
  const auto data = gen_static_shape(3, 9, Split::Test);
  auto cfg = model_preset("toy");
  cfg.class_count = 3;
  auto model = Model<float>::build(cfg, 4);
  const auto r = evaluate(model, data, {1, 1}, 4);
  const auto tiled = evaluate(model, data, {10, 3}, 64);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = probabilities(model.forward(data.clips[i]));
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(r.probabilities[i][k], p[k], 1e-7);
      EXPECT_NEAR(tiled.probabilities[i][k], p[k], 1e-6);
    }
  }
}

TEST(Evaluate, AveragesSoftmaxOverViews) {
  const auto data = gen_moving_dot(4, 8, Split::Test);
  const auto cfg = small_input_config();
  auto model = Model<double>::build(cfg, 5);
  const auto r = evaluate(model, data, {3, 3}, 7);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<double> avg(4, 0.0);
    for (const auto& v : make_views(data.clips[i], cfg, {3, 3})) {
      const auto p = probabilities(model.forward(v));
      for (std::size_t k = 0; k < 4; ++k) avg[k] += p[k] / 9;
    }
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(r.probabilities[i][k], avg[k], 1e-12);
  }
  auto other = cfg;
  other.class_count = 3;
  EXPECT_THROW(evaluate(Model<double>::build(other, 1), data), ConfigError);
}

TEST(Ensemble, AverageAndLogitOracles) {
  const std::vector<double> a{1, 0, 0, 0}, b{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(ensemble_average(a, b), (std::vector<double>{0.625, 0.125, 0.125, 0.125}));
  const auto l = ensemble_logits(std::vector<double>{2, 0}, std::vector<double>{0, 0});
  EXPECT_NEAR(l[0], std::exp(1.0) / (std::exp(1.0) + 1), 1e-15);
  EXPECT_THROW(ensemble_average(a, std::vector<double>{1}), DimensionError);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t K = 2 + rng() % 8;
    const auto p1 = vidtr::testing::random_stochastic(1, K, rng);
    const auto p2 = vidtr::testing::random_stochastic(1, K, rng);
    const auto e = ensemble_average(p1, p2);
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (p1[k] + p2[k] > p1[best] + p2[best]) best = k;
    ASSERT_EQ(static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin()), best);
    double total = 0;
    for (double x : e) total += x;
    ASSERT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Sgd, StepMatchesUpdateRule) {
  TensorF w({3}, {0.5f, -1.0f, 2.0f}, true);
  const TensorF c({3}, {3.0f, 4.0f, 0.0f});
  SgdOptimizer opt({{"w", w}}, 0.9, 0.1, 0.0);
  std::vector<double> p{0.5, -1.0, 2.0}, v(3, 0.0);
  for (int step = 0; step < 3; ++step) {
    opt.zero_grad();
    sum(mul(w, c)).backward();
    const double norm = opt.step(0.05);
    EXPECT_NEAR(norm, 5.0, 1e-6);
    for (std::size_t j = 0; j < 3; ++j) {
      v[j] = 0.9 * v[j] + (c.values()[j] + 0.1 * p[j]);
      p[j] -= 0.05 * v[j];
      EXPECT_NEAR(w.values()[j], p[j], 1e-5);
    }
  }
}

TEST(Sgd, ClippingRescalesToNorm) {
  TensorF w({2}, {0.0f, 0.0f}, true);
  const TensorF c({2}, {30.0f, 40.0f});
  SgdOptimizer opt({{"w", w}}, 0.0, 0.0, 1.0);
  sum(mul(w, c)).backward();
  EXPECT_NEAR(opt.step(1.0), 50.0, 1e-4);
  EXPECT_NEAR(w.values()[0], -0.6, 1e-6);
  EXPECT_NEAR(w.values()[1], -0.8, 1e-6);
}

TEST(TrainConfig, ValidationAndText) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(train_config_text(c),
            "epochs=100\nbatch_size=16\nlr=0.01\nmomentum=0.9\nweight_decay=1e-05\n"
            "milestones=50,80\nseed=0\nclip_norm=1\ntarget_accuracy=0\n");
  auto bad = c;
  bad.milestones = {80, 50};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.milestones = {100};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.momentum = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_TRUE(set_train_key(c, "milestones", "3, 7"));
  EXPECT_EQ(c.milestones, (std::vector<std::size_t>{3, 7}));
  EXPECT_FALSE(set_train_key(c, "depth", "2"));
  EXPECT_THROW(set_train_key(c, "lr", "fast"), ConfigError);
  EXPECT_EQ(metrics_csv_row({3, Split::Test, 0.25, 0.5}), "3,test,0.250000,0.5000");
}

TEST(Train, IsDeterministicAndStreamsCsv) {
  const auto train_set = gen_moving_dot(1, 16);
  const auto test_set = gen_moving_dot(1, 8, Split::Test);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.milestones = {1};
  std::string csv_a, csv_b;
  std::vector<float> head_a;
  for (int run = 0; run < 2; ++run) {
    auto model = Model<float>::build(model_preset("toy"), 7);
    std::ostringstream csv;
    const auto rows = train(model, train_set, tc, &test_set, &csv);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].split, Split::Train);
    EXPECT_EQ(rows[1].split, Split::Test);
    EXPECT_EQ(rows[3].epoch, 2u);
    const auto hv = model.head_weight().values();
    if (run == 0) {
      csv_a = csv.str();
      head_a.assign(hv.begin(), hv.end());
    } else {
      csv_b = csv.str();
      EXPECT_TRUE(std::equal(head_a.begin(), head_a.end(), hv.begin()));
    }
  }
  EXPECT_EQ(csv_a, csv_b);
  EXPECT_EQ(csv_a.substr(0, csv_a.find('\n')), kMetricsHeader);
  std::size_t lines = 0;
  for (char ch : csv_a) lines += ch == '\n';
  EXPECT_EQ(lines, 5u);
}

TEST(Train, RejectsMismatchAndDetectsDivergence) {
  const auto data = gen_moving_dot(1, 8);
  TrainConfig tc;
  tc.epochs = 1;
  tc.milestones = {};
  auto wrong = model_preset("toy");
  wrong.class_count = 3;
  auto m3 = Model<float>::build(wrong, 1);
  EXPECT_THROW(train(m3, data, tc), ConfigError);

  auto model = Model<float>::build(model_preset("toy"), 1);
  auto bias = model.head_bias();
  bias.mutable_values()[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(train(model, data, tc), DivergenceError);
}
