#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cdnd {

struct CheckResult {
  std::string name;
  bool pass = false;
  double deviation = 0.0;  // measured worst deviation for the check
  std::string note;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;

  bool all_pass() const;
};

/// Finite-difference and backward-pass invariants of the loss stack.
SuiteReport verify_grad();
/// Mixture-measure axioms, exact W1 against enumeration, norm bounds.
SuiteReport verify_theory();
/// Sampling/curvature/deformation oracles and invariants.
SuiteReport verify_geometry();

std::vector<SuiteReport> verify_all();

void print_report(std::ostream& out, const SuiteReport& report);

}  // namespace cdnd
