#include "lightcap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace lightcap {

GradcheckResult finite_diff_gradcheck(const GradcheckObjective& f, ParameterSet<double>& params,
                                      double epsilon) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw ValidationError(fmt::format("gradcheck epsilon {} outside [1e-6, 1e-3]", epsilon));
  }
  const double first = f(false);
  const double second = f(false);
  if (first != second) {
    throw DeterminismError(
        fmt::format("objective is not deterministic: {:.17g} vs {:.17g}", first, second));
  }

  params.zero_grad();
  f(true);

  GradcheckResult result;
  for (auto& p : params) {
    auto value = p->value.flat();
    const auto grad = p->grad.flat();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + epsilon;
      const double plus = f(false);
      value[i] = saved - epsilon;
      const double minus = f(false);
      value[i] = saved;

      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double analytic = grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_param = p->name;
          result.worst_index = i;
          result.worst_analytic = analytic;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  params.zero_grad();
  return result;
}

} // namespace lightcap
