#pragma once

#include <string>
#include <vector>

#include "mfnet/tensor.hpp"

namespace mfnet {

struct GradCheckResult {
  std::string op;
  double max_rel_err = 0.0;
  int seeds = 0;
  bool pass = false;
};

inline constexpr double kGradCheckTolerance = 1e-4;

// Names of every op in the default sweep, in run order.
std::vector<std::string> gradcheck_op_names();

// Runs the f64 finite-difference check for one op across its seed set and
// reports the worst relative error. Unknown names raise ConfigError. The
// special name "corrupt-fixture" runs an op whose hand-written backward is
// deliberately wrong; it is excluded from gradcheck_op_names() and exists to
// prove the harness can detect a bad gradient.
GradCheckResult run_gradcheck_op(const std::string& name);

// Runs the full default sweep.
std::vector<GradCheckResult> run_gradcheck_all();

}  // namespace mfnet
