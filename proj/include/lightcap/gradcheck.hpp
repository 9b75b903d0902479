#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "lightcap/tensor.hpp"

namespace lightcap {

/// Objective under test. Called with `true` it must also accumulate analytic
/// gradients into the parameter set; with `false` it only evaluates.
using GradcheckObjective = std::function<double(bool accumulate_grad)>;

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares the analytic gradient of every parameter entry against the central
/// difference (f(x+ε) − f(x−ε)) / 2ε. Relative error is
/// |a − n| / max(|a|, |n|, 1e-8). Throws DeterminismError when two plain
/// evaluations of the objective disagree and ValidationError when ε is outside
/// [1e-6, 1e-3].
GradcheckResult finite_diff_gradcheck(const GradcheckObjective& f, ParameterSet<double>& params,
                                      double epsilon);

} // namespace lightcap
