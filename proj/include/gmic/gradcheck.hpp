#pragma once

#include <string>
#include <vector>

namespace gmic {

struct GradCheckRow {
  std::string op;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  long coords = 0;
  bool pass = false;
};

// Central finite-difference verification of every registered op's backward
// rule plus the full composite objective, in check (64-bit) precision.
// Per-op tolerance 1e-5; composite tolerance 1e-4.
std::vector<GradCheckRow> run_gradient_checks(int seeds);

bool all_pass(const std::vector<GradCheckRow>& rows);

}  // namespace gmic
