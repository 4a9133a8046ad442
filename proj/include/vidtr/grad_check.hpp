#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vidtr/tensor.hpp"

namespace vidtr {

struct GradCheckOptions {
  double step = 1e-4;
  // Denominator floor for the relative error: entries whose gradients are
  // both smaller than this are compared on an absolute scale instead.
  double magnitude_floor = 1e-4;
  // 0 checks every entry; otherwise a seeded sample of at most this many
  // entries per parameter tensor.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_tape = 0.0;
  double worst_numeric = 0.0;
};

using NamedParam = std::pair<std::string, TensorD>;

/// Compares tape gradients of a scalar function against central differences
/// (f(p+h) - f(p-h)) / 2h for every (or a sampled subset of) parameter
/// entry. Runs in double precision only. Throws EvaluationError if f is not
/// finite at any probe point.
GradCheckReport grad_check(const std::function<TensorD()>& f,
                           std::vector<NamedParam> params,
                           const GradCheckOptions& options = {});

}  // namespace vidtr
