#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "vidtr/harness.hpp"
#include "vidtr/model.hpp"

namespace vidtr {

/// Model keys, training keys and model_seed, read from key=value text.
/// `preset=<name>` resets every model key, so it belongs first.
struct RunConfig {
  ModelConfig model = model_preset("toy");
  TrainConfig train;
  std::uint64_t model_seed = 0;
  std::set<std::string> explicit_keys;

  /// Throws ConfigError for an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  /// Fills unset seeds (seed from `fallback_seed`, model_seed from seed)
  /// and validates both halves.
  void finalize(std::optional<std::uint64_t> fallback_seed);
  /// Fully resolved key=value text; parse_run_config reads it back.
  std::string text() const;
};

/// "key=value" -> {key, value}, both trimmed. ConfigError without '='.
std::pair<std::string, std::string> split_assignment(const std::string& line);

/// '#' starts a comment; blank lines are skipped. Errors carry the line
/// number. The result is not finalized.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// VIDTR_SEED if set (ConfigError when it is not an unsigned integer).
std::optional<std::uint64_t> env_seed();

}  // namespace vidtr
