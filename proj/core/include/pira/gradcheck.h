#pragma once

#include <cstdint>

#include "pira/finite_diff.h"
#include "pira/model.h"

namespace pira {

struct GradCheckConfig {
  ModelConfig model;
  uint64_t seed = 42;
  int min_params = 200;
  double epsilon = 1e-3;
  double threshold = 1e-3;
  int batch_pairs = 4;
};

struct GradCheckReport {
  FiniteDiffReport fd;
  double seconds = 0.0;
  int64_t params_total = 0;
  double threshold = 0.0;
  bool passed = false;
};

// Builds a model at a random point in parameter space (the zero output
// layer is perturbed so backbone gradients are live), fixes a small
// synthetic batch and frozen dropout masks, and compares tape gradients
// against central finite differences on the full Bradley-Terry loss.
GradCheckReport gradcheck_model(const GradCheckConfig& cfg);

}  // namespace pira
