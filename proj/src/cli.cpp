#include "vidtr/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "vidtr/cost_model.hpp"
#include "vidtr/errors.hpp"
#include "vidtr/harness.hpp"
#include "vidtr/rollout.hpp"
#include "vidtr/run_config.hpp"

namespace vidtr {

namespace fs = std::filesystem;

namespace {

struct GenDataArgs {
  std::string task = "moving_dot";
  std::optional<std::uint64_t> seed;
  std::size_t n = 0;
  std::string split = "train";
  std::string out;
};

struct TrainArgs {
  std::string config;
  std::string data;
  std::string test_data;
  std::string init;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::string data;
  std::string views = "1x1";
  std::size_t batch_size = 32;
  std::string out;
};

struct RolloutArgs {
  std::string checkpoint;
  std::string data;
  std::size_t clip_index = 0;
  std::string out;
  double fraction = 0.30;
  bool residual_adjust = false;
  std::string heads = "mean";
};

struct CostArgs {
  std::vector<std::string> configs;
  std::string out;
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "' (expected train|test)");
}

void check_data(const ModelConfig& config, const SyntheticDataset& data,
                const std::string& what) {
  if (data.size() == 0) throw ConfigError(what + " is empty");
  if (data.class_count != config.class_count)
    throw ConfigError(what + " has " + std::to_string(data.class_count) +
                      " classes but the model has classes=" +
                      std::to_string(config.class_count));
  const auto& c = data.clips.front();
  if (c.channels != config.channels || c.frames < config.clip_len ||
      c.width < config.frame_width || c.height < config.frame_height)
    throw ConfigError(what + " clips are smaller than the model input");
}

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  const Task task = parse_task(a.task);
  const Split split = parse_split(a.split);
  const std::uint64_t seed = a.seed ? *a.seed : env_seed().value_or(0);
  if (a.n == 0) throw ConfigError("--n must be positive");
  const auto data = generate(task, seed, a.n, split);
  const fs::path path(a.out);
  if (path.has_parent_path()) make_dir(path.parent_path());
  save_dataset(data, path);
  out << "wrote " << data.size() << " " << to_string(task) << " clips (split "
      << to_string(split) << ", seed " << seed << ") to " << path.string() << "\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = load_run_config(a.config);
  for (const auto& o : a.overrides) {
    const auto [key, value] = split_assignment(o);
    rc.set(key, value);
  }
  if (a.seed) rc.set("seed", std::to_string(*a.seed));
  rc.finalize(env_seed());

  const auto data = load_dataset(a.data);
  check_data(rc.model, data, "training data");
  std::optional<SyntheticDataset> test;
  if (!a.test_data.empty()) {
    test = load_dataset(a.test_data);
    check_data(rc.model, *test, "test data");
  }

  auto model = Model<float>::build(rc.model, rc.model_seed);
  if (!a.init.empty()) load_checkpoint_into(model, a.init);

  const fs::path dir(a.out);
  make_dir(dir);
  std::string echo = rc.text();
  echo += "# data=" + a.data + "\n";
  if (test) echo += "# test_data=" + a.test_data + "\n";
  if (!a.init.empty()) echo += "# init=" + a.init + "\n";
  write_text(dir / "config.txt", echo);

  std::ofstream csv(dir / "metrics.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
  const auto rows = train(model, data, rc.train, test ? &*test : nullptr, &csv);
  save_checkpoint(model, dir / "model.ckpt");

  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    if (it->split == (test ? Split::Test : Split::Train)) {
      out << "epoch " << it->epoch << " " << to_string(it->split) << " loss "
          << fixed(it->loss, 6) << " accuracy " << fixed(it->accuracy, 4) << "\n";
      break;
    }
  out << "checkpoint " << (dir / "model.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const ViewSpec views = parse_views(a.views);
  if (a.batch_size == 0) throw ConfigError("--batch-size must be positive");
  const auto data = load_dataset(a.data);

  if (a.checkpoints.size() > 2)
    throw ConfigError("at most two checkpoints can be ensembled");
  std::vector<EvalResult> results;
  std::vector<ModelConfig> configs;
  for (const auto& path : a.checkpoints) {
    const auto model = load_checkpoint<float>(path);
    check_data(model.config(), data, "evaluation data");
    if (!configs.empty() && model.config().class_count != configs.front().class_count)
      throw ConfigError("ensembled checkpoints disagree on the class count");
    configs.push_back(model.config());
    results.push_back(evaluate(model, data, views, a.batch_size));
  }

  EvalResult r = results.front();
  if (results.size() > 1) {
    // Probability averaging across models, then the usual argmax scoring.
    const std::size_t K = data.class_count;
    r.class_accuracy.assign(K, 0.0);
    r.class_count.assign(K, 0);
    std::size_t correct = 0;
    double nll = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::vector<double> p =
          ensemble_average(results[0].probabilities[i], results[1].probabilities[i]);
      std::size_t best = 0;
      for (std::size_t k = 1; k < K; ++k)
        if (p[k] > p[best]) best = k;
      const auto label = static_cast<std::size_t>(data.labels[i]);
      const bool hit = best == label;
      correct += hit;
      r.class_accuracy[label] += hit;
      ++r.class_count[label];
      nll -= std::log(std::max(p[label], 1e-300));
      r.probabilities[i] = std::move(p);
    }
    for (std::size_t k = 0; k < K; ++k)
      if (r.class_count[k]) r.class_accuracy[k] /= static_cast<double>(r.class_count[k]);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    r.loss = nll / static_cast<double>(data.size());
  }

  std::ostringstream summary;
  summary << "accuracy " << fixed(r.accuracy, 4) << "\n"
          << "loss " << fixed(r.loss, 6) << "\n"
          << "views " << views.temporal << "x" << views.spatial << "\n"
          << "class_accuracy";
  for (std::size_t k = 0; k < r.class_accuracy.size(); ++k)
    summary << (k ? "," : " ") << fixed(r.class_accuracy[k], 4);
  summary << "\n";
  out << summary.str();

  if (!a.out.empty()) {
    const fs::path dir(a.out);
    make_dir(dir);
    std::string echo = model_config_text(configs.front());
    for (const auto& path : a.checkpoints) echo += "# checkpoint=" + path + "\n";
    echo += "# data=" + a.data + "\n# views=" + a.views +
            "\n# batch_size=" + std::to_string(a.batch_size) + "\n";
    write_text(dir / "config.txt", echo);
    write_text(dir / "eval.txt", summary.str());
    std::ostringstream csv;
    csv << "clip,label,prediction";
    for (std::size_t k = 0; k < data.class_count; ++k) csv << ",p" << k;
    csv << "\n";
    char buf[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& p = r.probabilities[i];
      std::size_t best = 0;
      for (std::size_t k = 1; k < p.size(); ++k)
        if (p[k] > p[best]) best = k;
      csv << i << ',' << data.labels[i] << ',' << best;
      for (double v : p) {
        std::snprintf(buf, sizeof buf, ",%.9g", v);
        csv << buf;
      }
      csv << "\n";
    }
    write_text(dir / "probabilities.csv", csv.str());
  }
  return kExitOk;
}

int cmd_rollout(const RolloutArgs& a, std::ostream& out) {
  RolloutOptions options;
  options.residual_adjust = a.residual_adjust;
  if (a.heads == "mean")
    options.heads = HeadReduce::Mean;
  else if (a.heads == "max")
    options.heads = HeadReduce::Max;
  else
    throw ConfigError("--heads must be mean or max");
  threshold_count(a.fraction, 1);

  const auto model = load_checkpoint<float>(a.checkpoint);
  const auto data = load_dataset(a.data);
  if (a.clip_index >= data.size())
    throw ConfigError("--clip-index " + std::to_string(a.clip_index) +
                      " is out of range for " + std::to_string(data.size()) + " clips");
  check_data(model.config(), data, "rollout data");
  const auto& config = model.config();
  const VideoClip clip = make_views(data.clips[a.clip_index], config, {}).front();
  const auto r = rollout(model, clip, a.fraction, options);

  const fs::path dir(a.out);
  make_dir(dir);
  char frac[32];
  std::snprintf(frac, sizeof frac, "%.17g", a.fraction);
  std::string echo = model_config_text(config);
  echo += "# checkpoint=" + a.checkpoint + "\n# data=" + a.data +
          "\n# clip_index=" + std::to_string(a.clip_index) + "\n# fraction=" + frac +
          "\n# residual_adjust=" + (a.residual_adjust ? "1" : "0") +
          "\n# heads=" + a.heads + "\n";
  write_text(dir / "config.txt", echo);

  const auto lattice = config.lattice();
  render(r.mask_st, &r.selected, lattice.across_w, lattice.across_h, config.patch, dir);
  render(r.mask_st, nullptr, lattice.across_w, lattice.across_h, config.patch,
         dir / "heatmap");

  std::size_t kept = 0;
  for (bool s : r.selected) kept += s;
  out << "label " << data.labels[a.clip_index] << "\n"
      << "selected " << kept << " of " << r.selected.size() << " patch tokens\n"
      << "frames " << r.mask_st.dim(0) << " written to " << dir.string() << "\n";
  return kExitOk;
}

std::pair<std::string, ModelConfig> resolve_cost_config(const std::string& spec) {
  if (fs::is_regular_file(spec)) {
    auto rc = load_run_config(spec);
    rc.model.validate();
    return {fs::path(spec).stem().string(), rc.model};
  }
  for (const auto& name : model_preset_names())
    if (name == spec) return {name, model_preset(name)};
  throw ConfigError("--config '" + spec + "' is neither a file nor a preset name");
}

int cmd_cost(const CostArgs& a, std::ostream& out) {
  std::vector<CostReport> reports;
  std::string echo;
  for (const auto& spec : a.configs) {
    auto [name, config] = resolve_cost_config(spec);
    reports.push_back(flops_estimate(config, name));
    echo += "# config=" + spec + "\n" + model_config_text(config);
  }
  std::optional<Comparison> cmp;
  if (reports.size() > 1) cmp = compare_report(reports);

  for (const auto& r : reports) out << report_text(r) << "\n";
  if (cmp) out << cmp->text;

  if (!a.out.empty()) {
    const fs::path dir(a.out);
    make_dir(dir);
    write_text(dir / "config.txt", echo);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const std::string stem = "cost_" + std::to_string(i) + "_" + reports[i].name;
      write_text(dir / (stem + ".txt"), report_text(reports[i]));
      write_text(dir / (stem + ".csv"), report_csv(reports[i]));
    }
    if (cmp) {
      write_text(dir / "compare.txt", cmp->text);
      write_text(dir / "compare.csv", cmp->csv);
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"VidTr video transformers on synthetic clips", "vidtr"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset cache");
  gen_cmd->add_option("--task", gen.task, "moving_dot | static_shape")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "data seed (default: VIDTR_SEED, else 0)");
  gen_cmd->add_option("--n", gen.n, "number of clips")->required();
  gen_cmd->add_option("--split", gen.split, "train | test")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "cache file (manifest goes next to it)")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a run directory");
  train_cmd->add_option("--config", tr.config, "key=value run config")->required();
  train_cmd->add_option("--data", tr.data, "training dataset cache")->required();
  train_cmd->add_option("--test-data", tr.test_data, "dataset for per-epoch test rows");
  train_cmd->add_option("--init", tr.init, "start from this checkpoint");
  train_cmd->add_option("--out", tr.out, "run directory")->required();
  train_cmd->add_option("--seed", tr.seed, "overrides the seed key");
  train_cmd->add_option("--set", tr.overrides, "key=value override (repeatable)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate one checkpoint or an ensemble");
  eval_cmd->add_option("--checkpoint", ev.checkpoints,
                       "checkpoint; give two to average probabilities")->required();
  eval_cmd->add_option("--data", ev.data, "dataset cache")->required();
  eval_cmd->add_option("--views", ev.views, "temporal x spatial views")->capture_default_str();
  eval_cmd->add_option("--batch-size", ev.batch_size)->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "optional run directory");

  RolloutArgs ro;
  auto* rollout_cmd = app.add_subcommand("rollout", "attention rollout heatmaps for one clip");
  rollout_cmd->add_option("--checkpoint", ro.checkpoint)->required();
  rollout_cmd->add_option("--data", ro.data, "dataset cache")->required();
  rollout_cmd->add_option("--clip-index", ro.clip_index)->capture_default_str();
  rollout_cmd->add_option("--out", ro.out, "output directory")->required();
  rollout_cmd->add_option("--fraction", ro.fraction, "share of patch tokens kept")
      ->capture_default_str();
  rollout_cmd->add_flag("--residual-adjust", ro.residual_adjust,
                        "use (A + I) / 2 for every factor");
  rollout_cmd->add_option("--heads", ro.heads, "mean | max")->capture_default_str();

  CostArgs co;
  auto* cost_cmd = app.add_subcommand("cost", "analytic affinity and MAC counts");
  cost_cmd->add_option("--config", co.configs, "config file or preset name (repeatable)")
      ->required();
  cost_cmd->add_option("--out", co.out, "optional output directory");

  std::vector<const char*> argv{"vidtr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out);
    if (rollout_cmd->parsed()) return cmd_rollout(ro, out);
    if (cost_cmd->parsed()) return cmd_cost(co, out);
  } catch (const ConfigError& e) {
    err << "vidtr: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedConfiguration& e) {
    err << "vidtr: unsupported: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "vidtr: error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace vidtr
