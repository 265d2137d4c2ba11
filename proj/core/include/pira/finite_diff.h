#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pira/tensor.h"

namespace pira {

// One parameter tensor paired with the analytic gradient to verify.
struct FdTarget {
  Tensor* param = nullptr;
  Tensor analytic;
  std::string name;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  int checked = 0;
  double epsilon = 0.0;
  struct Entry {
    std::string tensor;
    int64_t index = 0;
    double analytic = 0.0;
    double fd = 0.0;
    double rel_error = 0.0;
  };
  std::vector<Entry> worst;  // a few largest offenders, best first
};

// Central-difference check of analytic gradients over a sampled subset of
// parameter entries. `loss_fn` must be deterministic (it is evaluated twice
// up front; a mismatch raises DeterminismError, which is how re-sampled
// dropout masks are rejected). Parameters are perturbed in place and
// restored. Relative error uses |fd - an| / max(|fd|, |an|, denom_floor);
// entries below the floor are effectively compared absolutely.
FiniteDiffReport finite_diff_check(const std::function<double()>& loss_fn,
                                   std::vector<FdTarget>& targets, double epsilon,
                                   int samples, uint64_t sample_seed,
                                   double denom_floor = 1e-2);

}  // namespace pira
