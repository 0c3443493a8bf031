#pragma once

// Central finite-difference gradient checker.
//
// The caller supplies two closures: `analytic()` zeroes and fills every
// parameter's .grad, and `evaluate()` recomputes the loss from the current
// parameter values, returning the loss together with a signature of the
// discrete branch decisions it took (max-pool argmax, ReLU gates). A
// coordinate whose +h and -h evaluations take different branches sits on a
// non-differentiable point and is skipped rather than compared.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gidropout/nn/tensor.hpp"
#include "gidropout/random.hpp"

namespace gidropout::nn {

struct LossEval {
  double loss = 0.0;
  std::uint64_t branches = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Tensors larger than this are checked on a random subset of coordinates.
  std::size_t max_coords_per_tensor = 64;
  // Denominator floor of the relative error, so gradients that are zero up to
  // rounding do not blow the ratio up.
  double denom_floor = 1e-4;
  std::uint64_t seed = 1234;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]" of the worst coordinate
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::vector<std::string> skipped_at;

  bool passed(double tol) const { return checked > 0 && max_rel_error < tol; }
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

template <typename Analytic, typename Evaluate>
GradCheckReport grad_check(std::span<Parameter* const> params, Analytic&& analytic,
                           Evaluate&& evaluate, const GradCheckOptions& opts = {}) {
  analytic();
  const std::uint64_t base_branches = evaluate().branches;
  Rng rng(opts.seed);
  GradCheckReport report;
  for (Parameter* p : params) {
    const std::size_t size = p->value.size();
    std::vector<std::size_t> coords;
    if (size <= opts.max_coords_per_tensor) {
      for (std::size_t i = 0; i < size; ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < opts.max_coords_per_tensor; ++i)
        coords.push_back(uniform_index(rng, size));
    }
    for (std::size_t i : coords) {
      const double saved = p->value[i];
      p->value[i] = saved + opts.step;
      const LossEval plus = evaluate();
      p->value[i] = saved - opts.step;
      const LossEval minus = evaluate();
      p->value[i] = saved;
      const std::string where = p->name + "[" + std::to_string(i) + "]";
      if (plus.branches != base_branches || minus.branches != base_branches) {
        ++report.skipped;
        report.skipped_at.push_back(where);
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * opts.step);
      const double err = relative_error(p->grad[i], numeric, opts.denom_floor);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = where;
      }
    }
  }
  return report;
}

}  // namespace gidropout::nn
