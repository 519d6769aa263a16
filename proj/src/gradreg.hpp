#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace moaecr {

// One randomized gradcheck case: scalar-valued f plus the leaf tensors the
// finite-difference probe sweeps.
struct GradOpCase {
  std::function<Tensor(const std::vector<Tensor>&)> f;
  std::vector<Tensor> inputs;
};

struct GradOpEntry {
  std::string name;
  std::function<GradOpCase(SeededRng&)> make_case;
};

struct GradOpReport {
  std::string name;
  int64_t cases = 0;
  int64_t checked = 0;
  int64_t skipped = 0;
  double max_rel_err = 0.0;
  bool pass = true;
  std::string detail;  // first failure note, empty when passing
};

struct GradSuiteReport {
  std::vector<GradOpReport> ops;
  bool all_pass = true;
  double wall_ms = 0.0;

  std::string to_text() const;  // one line per registered op
};

// Every differentiable op and loss, each exactly once.
const std::vector<GradOpEntry>& gradcheck_registry();

// fault_op is a test fixture: that op's analytic gradients get a constant
// bias, standing in for a broken backward rule the comparator must catch.
GradSuiteReport run_gradcheck_suite(int cases_per_op = 100,
                                    const std::string& fault_op = "");

}  // namespace moaecr
