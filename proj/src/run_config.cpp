#include "vidtr/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vidtr/errors.hpp"

namespace vidtr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_seed(const std::string& what, const std::string& text) {
  const std::string v = trim(text);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(what + ": expected an unsigned integer, got '" + text + "'");
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw ConfigError(what + ": value out of range");
  }
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "model_seed") {
    model_seed = parse_seed("key 'model_seed'", value);
  } else if (!set_model_key(model, key, value) && !set_train_key(train, key, value)) {
    throw ConfigError("unknown key '" + key + "'");
  }
  explicit_keys.insert(key);
}

void RunConfig::finalize(std::optional<std::uint64_t> fallback_seed) {
  if (!explicit_keys.count("seed") && fallback_seed) train.seed = *fallback_seed;
  if (!explicit_keys.count("model_seed")) model_seed = train.seed;
  model.validate();
  train.validate();
}

std::string RunConfig::text() const {
  return model_config_text(model) + train_config_text(train) +
         "model_seed=" + std::to_string(model_seed) + "\n";
}

std::pair<std::string, std::string> split_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos)
    throw ConfigError("expected key=value, got '" + line + "'");
  std::string key = trim(line.substr(0, eq));
  if (key.empty()) throw ConfigError("empty key in '" + line + "'");
  return {key, trim(line.substr(eq + 1))};
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      const auto [key, value] = split_assignment(line);
      config.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_run_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("VIDTR_SEED");
  if (!v || !*v) return std::nullopt;
  return parse_seed("VIDTR_SEED", v);
}

}  // namespace vidtr
