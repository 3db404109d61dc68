#pragma once

#include <iosfwd>

namespace pydnet {

// Runs the built-in verification suite: finite-difference gradient checks for
// every differentiable op plus a tiny end-to-end network, the
// depthwise+pointwise vs grouped-convolution decomposition oracle, the
// single-kernel and replicated-pointwise pyramid reductions, and closed-form
// vs enumerated parameter totals over the full benchmark grid. Prints one
// line per section to out and returns 0 on success, 1 on any failure.
//
// sabotage_gradient is a test fixture: it perturbs one analytic weight
// gradient before comparison, which must make the gradient section fail.
int run_selftest(std::ostream& out, bool sabotage_gradient = false);

}  // namespace pydnet
