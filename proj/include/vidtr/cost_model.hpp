#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vidtr/model.hpp"

// Analytic element and multiply-accumulate counts for a ModelConfig. Counts
// follow what the library computes: query/key/value projections and scores
// cover every input row, pooling shrinks the affinity rows before the value
// product, and all later stages run on the pooled rows.

namespace vidtr {

struct LayerCost {
  std::size_t index = 0;
  std::size_t t_in = 0;   // temporal extent entering the layer, class row included
  std::size_t t_out = 0;  // temporal extent leaving the layer
  std::uint64_t affinity_per_head = 0;
  std::uint64_t affinity = 0;  // all heads
  std::uint64_t qkv_macs = 0;
  std::uint64_t score_macs = 0;
  std::uint64_t value_macs = 0;
  std::uint64_t output_macs = 0;
  std::uint64_t ffn_macs = 0;

  std::uint64_t attention_macs() const {
    return qkv_macs + score_macs + value_macs + output_macs;
  }
  std::uint64_t total_macs() const { return attention_macs() + ffn_macs; }
};

struct CostReport {
  std::string name;
  ModelConfig config;
  std::vector<LayerCost> layers;
  std::uint64_t affinity = 0;
  std::uint64_t attention_macs = 0;
  std::uint64_t ffn_macs = 0;
  std::uint64_t embed_macs = 0;
  std::uint64_t head_macs = 0;
  std::uint64_t parameters = 0;

  std::uint64_t encoder_macs() const { return attention_macs + ffn_macs; }
  std::uint64_t total_macs() const { return encoder_macs() + embed_macs + head_macs; }
};

/// Affinity elements per layer, summed over heads.
std::vector<std::uint64_t> affinity_counts(const ModelConfig& config);
/// Affinity elements per layer for a single head.
std::vector<std::uint64_t> affinity_counts_per_head(const ModelConfig& config);

/// Learnable scalar count of Model::build(config).
std::uint64_t parameter_count(const ModelConfig& config);

CostReport flops_estimate(const ModelConfig& config, const std::string& name = "");

/// Aligned table with the formulas as a header comment.
std::string report_text(const CostReport& report);
/// One row per layer plus a "total" row.
std::string report_csv(const CostReport& report);

/// 1 - candidate / baseline (0 when baseline is 0).
double reduction(std::uint64_t baseline, std::uint64_t candidate);

struct Comparison {
  std::string text;
  std::string csv;
};

/// Side-by-side totals; reductions are relative to the first report.
/// Needs at least two reports (ConfigError otherwise).
Comparison compare_report(const std::vector<CostReport>& reports);

}  // namespace vidtr
