#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace masksparsity {

/// Norm-ratio discrepancy between an analytic gradient and the central
/// finite difference of `f` at `x` with the given step:
/// ||analytic - fd|| / (||analytic|| + ||fd|| + tiny).
double finite_diff_rel_err(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x, const std::vector<double>& analytic,
                           double step = 1e-3);

struct GradCheckCase {
  std::string op;
  double max_rel_err{0};
  double tol{0};
  bool passed{false};
};

/// Runs every backward op (conv, batchnorm, relu, linear, global_avgpool,
/// softmax_cross_entropy, gamma/weight penalties, end-to-end model) against
/// central finite differences in 64-bit mode on random instances of at most
/// 200 elements each.
std::vector<GradCheckCase> run_gradient_checks(uint64_t seed, int instances_per_op,
                                               double tol = 1e-5);

}  // namespace masksparsity
