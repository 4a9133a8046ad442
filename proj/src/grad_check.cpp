#include "vidtr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vidtr {

namespace {

double evaluate(const std::function<TensorD()>& f) {
  NoGradGuard no_grad;
  TensorD out = f();
  if (out.size() != 1)
    throw DimensionError("grad_check: function must be scalar-valued, got " +
                         shape_string(out.shape()));
  const double v = out.item();
  if (!std::isfinite(v))
    throw EvaluationError("grad_check: function value is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<TensorD()>& f,
                           std::vector<NamedParam> params,
                           const GradCheckOptions& options) {
  for (auto& [name, p] : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    TensorD out = f();
    if (out.size() != 1)
      throw DimensionError("grad_check: function must be scalar-valued");
    if (!std::isfinite(out.item()))
      throw EvaluationError("grad_check: function value is not finite");
    out.backward();
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  const double h = options.step;

  for (auto& [name, p] : params) {
    std::vector<double> tape(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), tape.begin());

    std::vector<std::size_t> entries(p.size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (options.max_entries_per_param && entries.size() > options.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }

    auto values = p.mutable_values();
    for (auto i : entries) {
      const double saved = values[i];
      values[i] = saved + h;
      const double plus = evaluate(f);
      values[i] = saved - h;
      const double minus = evaluate(f);
      values[i] = saved;

      const double numeric = (plus - minus) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(tape[i]),
                                     options.magnitude_floor});
      const double rel = std::abs(numeric - tape[i]) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.worst_param.empty()) {
        if (rel >= report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst_param = name;
          report.worst_index = i;
          report.worst_tape = tape[i];
          report.worst_numeric = numeric;
        }
      }
    }
    p.zero_grad();
  }
  return report;
}

}  // namespace vidtr
