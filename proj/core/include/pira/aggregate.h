#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pira/instruction.h"
#include "pira/model.h"

namespace pira {

// Inference-time aggregation plan: K instructions by M stochastic head
// passes with per-pass dropout rates drawn from Uniform(delta_low,
// delta_high). Fully determined by base_seed.
struct AggregationConfig {
  int K = 6;
  int M = 12;
  float delta_low = 0.1f;
  float delta_high = 0.4f;
  uint64_t base_seed = 0;
  // Explicit instruction subset; empty means the first K of the set.
  std::vector<int> instruction_ids;
  // When true, one list of M rates is shared by every instruction (the
  // paper indexes rates by pass only); by default each (k, m) cell draws
  // its own rate, which keeps the same marginal law but decorrelates cells.
  bool shared_rates = false;

  void validate(int available_instructions) const;
  std::vector<int> resolved_instruction_ids() const;
};

struct RewardBreakdown {
  std::vector<std::vector<float>> samples;  // [K][M] rewards r^(m)(x,y|t_k)
  std::vector<std::vector<float>> deltas;   // [K][M] dropout rates used
  std::vector<double> per_instruction;      // row means R_stoc(x,y|t_k)
  double final = 0.0;                       // mean of per_instruction
  std::vector<int> instruction_ids;
};

// M independent Uniform[lo, hi] draws; pure function of rng_key. Endpoints
// are reachable at 24-bit float resolution.
std::vector<float> sample_dropout_rates(int m, uint64_t rng_key, float lo, float hi);

struct StochasticHeadAverage {
  double mean = 0.0;
  std::vector<float> samples;
  std::vector<float> deltas;
};

// M stochastic head passes over one fixed backbone output u.
StochasticHeadAverage stochastic_head_average(const ModelParams& params, const Tensor& u,
                                              int m, uint64_t rng_key, float lo, float hi);

// Deterministic instruction-set averaging (M forced to 1, delta 0):
// (1/K) sum_k r(x,y|t_k).
double instruction_average(const ModelParams& params, const InstructionSet& set,
                           const std::string& question, const std::string& response,
                           const AggregationConfig& cfg);

// The dual aggregation: K deterministic backbone passes, K x M stochastic
// head passes with per-cell keys derived from (base_seed, k, m).
RewardBreakdown dual_aggregate(const ModelParams& params, const InstructionSet& set,
                               const std::string& question, const std::string& response,
                               const AggregationConfig& cfg,
                               InputFormat format = InputFormat::instructed);

// Latency reference that reruns the whole backbone for every (k, m) cell
// instead of only the head. Same sample grid semantics.
RewardBreakdown dual_aggregate_backbone_rerun(const ModelParams& params,
                                              const InstructionSet& set,
                                              const std::string& question,
                                              const std::string& response,
                                              const AggregationConfig& cfg);

// CSV with columns k,m,delta,reward; per-instruction summary rows use
// m="Rstoc" and the final row k="final".
void write_breakdown_csv(const RewardBreakdown& b, const std::string& path);

}  // namespace pira
