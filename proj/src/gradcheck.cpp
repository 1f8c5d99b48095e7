#include "istd/gradcheck.hpp"

#include <cmath>

#include "istd/rng.hpp"

namespace istd {

std::string GradCheckResult::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%s: max_rel_err=%.3e over %lld probes (worst %s[%lld]: "
                "analytic=%.6e numeric=%.6e)",
                pass ? "pass" : "FAIL", max_rel_err,
                static_cast<long long>(probes), worst_slot.c_str(),
                static_cast<long long>(worst_index), worst_analytic,
                worst_numeric);
  return buf;
}

GradCheckResult grad_check(GradCheckProblem& problem, double h, double tol,
                           int64_t max_probes, uint64_t seed) {
  double loss0 = problem.forward();
  if (!std::isfinite(loss0))
    throw ValueError("grad_check: forward loss is non-finite");
  problem.backward();

  // snapshot analytic gradients
  std::vector<std::vector<double>> analytic;
  int64_t total = 0;
  for (const auto& s : problem.slots) {
    if (!s.grad->all_finite())
      throw ValueError("grad_check: non-finite analytic gradient in slot '" +
                       s.name + "'");
    analytic.push_back(s.grad->v);
    total += static_cast<int64_t>(s.value->size());
  }
  if (total == 0) throw ValueError("grad_check: no elements to probe");

  // flat probe index -> (slot, element)
  auto locate = [&](int64_t flat, size_t& slot, int64_t& elem) {
    slot = 0;
    while (flat >= static_cast<int64_t>(problem.slots[slot].value->size())) {
      flat -= static_cast<int64_t>(problem.slots[slot].value->size());
      ++slot;
    }
    elem = flat;
  };

  std::vector<int64_t> probes;
  if (total <= 10000) {
    probes.resize(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) probes[static_cast<size_t>(i)] = i;
  } else {
    Pcg32 rng(seed);
    probes.reserve(static_cast<size_t>(max_probes));
    for (int64_t i = 0; i < max_probes; ++i)
      probes.push_back(static_cast<int64_t>(
          rng.next_below(static_cast<uint32_t>(total))));
  }

  GradCheckResult res;
  res.probes = static_cast<int64_t>(probes.size());
  for (int64_t flat : probes) {
    size_t slot;
    int64_t elem;
    locate(flat, slot, elem);
    double* cell = &problem.slots[slot].value->v[static_cast<size_t>(elem)];
    double saved = *cell;
    *cell = saved + h;
    double lp = problem.forward();
    *cell = saved - h;
    double lm = problem.forward();
    *cell = saved;
    if (!std::isfinite(lp) || !std::isfinite(lm))
      throw ValueError("grad_check: non-finite loss while probing slot '" +
                       problem.slots[slot].name + "'");
    double numeric = (lp - lm) / (2.0 * h);
    double a = analytic[slot][static_cast<size_t>(elem)];
    double rel = std::abs(a - numeric) /
                 std::max({1.0, std::abs(a), std::abs(numeric)});
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_slot = problem.slots[slot].name;
      res.worst_index = elem;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
  }
  // restore caches to the unperturbed point
  problem.forward();
  res.pass = res.max_rel_err < tol;
  return res;
}

}  // namespace istd
