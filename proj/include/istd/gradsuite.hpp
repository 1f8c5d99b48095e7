#pragma once

#include <string>
#include <vector>

#include "istd/gradcheck.hpp"

namespace istd {

struct SuiteCheck {
  std::string name;
  GradCheckResult result;
  bool expect_fail = false;  // negative controls must fail
  bool ok() const { return result.pass != expect_fail; }
};

// Finite-difference checks for every layer type plus the hint stack and the
// full tiny model, all in double. max_probes caps the sampled elements for
// the large model checks.
std::vector<SuiteCheck> run_gradient_suite(int64_t max_probes = 4096);

}  // namespace istd
