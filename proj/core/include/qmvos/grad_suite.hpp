#pragma once

#include <string>
#include <vector>

namespace qmvos {

struct GradSuiteEntry {
  std::string name;
  double max_rel_err = 0.0;
};

// Finite-difference gradient checks (h = 1e-4) over seeded random instances
// of every differentiable block: the primitive ops, the two interaction
// blocks, the fuse+pool composition and the dynamic-filter head. Returns the
// worst relative error per block.
std::vector<GradSuiteEntry> run_grad_suite(int instances_per_block = 10);

}  // namespace qmvos
