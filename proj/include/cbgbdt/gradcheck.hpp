#ifndef CBGBDT_GRADCHECK_HPP_
#define CBGBDT_GRADCHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cbgbdt/losses.hpp"

namespace cbgbdt {

struct FdOptions {
  int draws = 1000;
  std::uint64_t seed = 0;
  int n_classes = 4;
  double step = 1e-6;
  /// Draws with any |p - m| below this are skipped (kink of the shifted part).
  double band = 1e-4;
  double grad_tol = 1e-6;
  double hess_tol = 1e-5;
  /// Multiplies the WCE gradient before comparison; 1 disables the fault.
  double wce_grad_scale = 1.0;
};

struct FdResult {
  LossKind kind = LossKind::CE;
  TaskKind task = TaskKind::Binary;
  int checked = 0;
  int skipped = 0;
  int failures = 0;
  /// Largest |analytic - numeric| / max(1, |analytic|).
  double worst_grad = 0.0;
  double worst_hess = 0.0;
  std::string first_failure;

  bool passed() const { return failures == 0; }
};

/// Gradient against the central difference of the loss value, Hessian
/// diagonal against the central difference of the analytic gradient.
/// Parameters are drawn from the tuner's loss grids.
FdResult fd_check(LossKind kind, TaskKind task, const FdOptions& opts);

/// Every supported (loss, task) pair.
std::vector<FdResult> fd_suite(const FdOptions& opts);

struct IdentityResult {
  std::string name;
  bool passed = true;
  double worst = 0.0;
  std::string detail;
};

/// The six reduction identities on (value, gradient, un-floored Hessian).
/// In multi-class the focal, weighted and shifted forms keep their negative
/// parts and reduce to each other rather than to softmax CE.
std::vector<IdentityResult> identity_suite(std::uint64_t seed, int draws = 200, double tol = 1e-12);

}  // namespace cbgbdt

#endif  // CBGBDT_GRADCHECK_HPP_
