#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pira/aggregate.h"
#include "pira/corpus.h"

namespace pira {

struct PairwiseAccuracyResult {
  double accuracy = 0.0;  // exact ties score 0.5
  int ties = 0;
  int n = 0;
};

// Fraction of pairs with R(x, chosen) > R(x, rejected) under the given
// aggregation plan; per-example evaluation seeds derive from agg.base_seed.
PairwiseAccuracyResult pairwise_accuracy(const ModelParams& params,
                                         const InstructionSet& set,
                                         std::span<const PreferenceExample> test,
                                         const AggregationConfig& agg,
                                         InputFormat format = InputFormat::instructed,
                                         int threads = 1);

struct StabilityReport {
  std::vector<double> per_example_std;
  double mean_std = 0.0;
};

// Scores each example's chosen response `repeats` times under different
// derived base seeds and reports the spread of the final reward.
StabilityReport reward_stability(const ModelParams& params, const InstructionSet& set,
                                 std::span<const PreferenceExample> examples,
                                 const AggregationConfig& agg, int repeats,
                                 InputFormat format = InputFormat::instructed,
                                 int threads = 1);

struct LatencyReport {
  double median_base_us = 0.0;   // same K, M=1, delta=0
  double median_agg_us = 0.0;    // the requested aggregation
  double overhead_pct = 0.0;     // agg vs base
  double median_rerun_us = 0.0;  // backbone rerun per cell at the same K, M
  double rerun_ratio = 0.0;      // rerun vs agg
};

// Median single-thread wall-clock over >= 50 calls after 5 warmup calls.
LatencyReport latency_overhead(const ModelParams& params, const InstructionSet& set,
                               std::span<const PreferenceExample> examples,
                               const AggregationConfig& agg, int timed_calls = 50);

struct EvalReport {
  double pair_accuracy = 0.0;
  int ties = 0;
  int n_pairs = 0;
  std::optional<double> accuracy_std;  // across checkpoints
  std::optional<double> reward_std;
  std::optional<double> latency_overhead_pct;
  std::optional<double> rerun_ratio;
};

void write_eval_report_json(const EvalReport& r, const AggregationConfig& agg,
                            const std::string& path);
void write_eval_report_csv(const EvalReport& r, const std::string& path);

// Sample standard deviation (n-1 divisor); 0 for fewer than two values.
double sample_std(std::span<const double> values);
double mean_of(std::span<const double> values);

}  // namespace pira
