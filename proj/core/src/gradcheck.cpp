// SPDX-License-Identifier: Apache-2.0
#include "macaw/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "macaw/error.hpp"
#include "macaw/rng.hpp"

namespace macaw {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const std::function<double(const ParamStore&)>& fn, ParamStore& params,
                                  const Gradients& analytic, const GradCheckOptions& options) {
  if (analytic.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "gradient count does not match parameter count");
  }
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  if (options.samples == 0) {
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < params[p].size(); ++i) probes.emplace_back(p, i);
  } else {
    Rng rng(options.seed);
    for (std::size_t s = 0; s < options.samples; ++s) {
      const std::size_t p = rng.uniform_index(params.size());
      probes.emplace_back(p, rng.uniform_index(params[p].size()));
    }
  }

  GradCheckReport report;
  for (const auto& [p, i] : probes) {
    double& slot = params[p][i];
    const double saved = slot;
    slot = saved + options.step;
    const double up = fn(params);
    slot = saved - options.step;
    const double down = fn(params);
    slot = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[p][i];
    const double err = relative_error(a, numeric);
    report.max_rel_err = std::max(report.max_rel_err, err);
    ++report.checked;
    GradProbe probe{params.name(p), i, a, numeric, err};
    if (err <= options.tolerance) {
      ++report.within_tolerance;
    } else {
      report.failures.push_back(probe);
    }
    report.probes.push_back(std::move(probe));
  }
  report.pass = report.checked > 0 && report.pass_fraction() >= options.required_fraction;
  return report;
}

}  // namespace macaw
