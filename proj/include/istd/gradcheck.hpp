#pragma once

#include <functional>
#include <string>
#include <vector>

#include "istd/tensor.hpp"

namespace istd {

// One perturbable tensor: the value buffer the forward pass reads and the
// gradient buffer the backward pass fills.
struct GradSlot {
  std::string name;
  Tensor4<double>* value = nullptr;
  Tensor4<double>* grad = nullptr;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  bool pass = false;
  int64_t probes = 0;
  std::string worst_slot;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string summary() const;
};

// The unit under test. forward() returns the scalar loss for the current
// slot values; backward() zeroes and refills every slot gradient. Both are
// called repeatedly, so they must be deterministic functions of the slots.
struct GradCheckProblem {
  std::function<double()> forward;
  std::function<void()> backward;
  std::vector<GradSlot> slots;
};

// Central finite differences against the analytic gradients. Every element
// is probed when the total is at most 10k; above that a seeded random
// subsample of max_probes elements is used. rel_err uses
// |analytic - numeric| / max(1, |analytic|, |numeric|). Runs in double;
// aborts with a diagnostic on non-finite values.
GradCheckResult grad_check(GradCheckProblem& problem, double h = 1e-5,
                           double tol = 1e-4, int64_t max_probes = 4096,
                           uint64_t seed = 7);

}  // namespace istd
