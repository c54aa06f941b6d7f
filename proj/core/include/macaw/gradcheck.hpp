// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "macaw/autograd.hpp"

namespace macaw {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Number of scalar entries to probe; 0 probes every entry.
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  /// Fraction of probes that must be within tolerance for `pass`.
  double required_fraction = 1.0;
};

struct GradProbe {
  std::string param;
  std::size_t offset = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t within_tolerance = 0;
  bool pass = false;
  std::vector<GradProbe> failures;
  /// Every probe in sampling order.
  std::vector<GradProbe> probes;

  double pass_fraction() const {
    return checked ? static_cast<double>(within_tolerance) / static_cast<double>(checked) : 0.0;
  }
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares `analytic` against central differences of `fn` around the
/// current values of `params`. Probed entries are restored afterwards.
/// Sampling picks a parameter tensor uniformly, then an entry uniformly, so
/// small tensors (biases, conv kernels) are not drowned out by large ones.
GradCheckReport finite_diff_check(const std::function<double(const ParamStore&)>& fn, ParamStore& params,
                                  const Gradients& analytic, const GradCheckOptions& options = {});

}  // namespace macaw
