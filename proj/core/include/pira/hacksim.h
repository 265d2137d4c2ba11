#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pira/aggregate.h"
#include "pira/gold.h"
#include "pira/instruction.h"
#include "pira/model.h"

namespace pira {

// Candidate-response distribution standing in for a policy's action law.
// Within the training length range quality couples to length the way the
// training corpus does; past len_sat quality dilutes, so selecting hard on
// a length-loving proxy walks off the gold cliff.
struct CandidateSampler {
  int len_min = 4;
  int len_max = 40;
  int len_sat = 16;  // end of the in-distribution ramp
  double quality_lo = 0.05;
  double quality_hi = 0.45;
  double coupling = 0.7;            // in-range length/quality coupling
  double tail_quality_drop = 0.8;   // fraction of quality lost by len_max
  double bad_base = 0.05;
  double bad_tail_rise = 0.0;       // extra bad-token rate at len_max
  int question_len_min = 3;
  int question_len_max = 8;
  uint64_t seed = 0;

  void validate() const;
  std::string sample_question(const Vocab& vocab, uint64_t key) const;
  std::string sample_response(const Vocab& vocab, uint64_t key) const;
};

// Scores one candidate; candidate_key is a pure function of
// (run seed, n, trial, candidate index) so stochastic proxies stay
// deterministic.
using ProxyScorer =
    std::function<double(const std::string& question, const std::string& response,
                         uint64_t candidate_key)>;

struct BestOfNResult {
  int selected = 0;
  std::string response;
  std::vector<double> scores;
};

// Samples n candidates, scores each, returns the argmax (ties -> lowest
// index). Pure function of (sampler, question, n, key).
BestOfNResult best_of_n(const ProxyScorer& proxy, const CandidateSampler& sampler,
                        const Vocab& vocab, const std::string& question, int n,
                        uint64_t key);

enum class ProxyKind { baseline, thomas_fixed_025, pira };
const char* proxy_name(ProxyKind kind);
ProxyKind proxy_kind_from_name(const std::string& name);

// Inference policy of a proxy: input format plus aggregation plan.
// baseline: concat input, single deterministic pass.
// thomas_fixed_025: instructed input, K=1, M=4, fixed delta 0.25.
// pira: instructed input, K=6, M=12, delta ~ Uniform(0.1, 0.4).
struct ProxyConfig {
  ProxyKind kind = ProxyKind::pira;
  InputFormat format = InputFormat::instructed;
  AggregationConfig agg;
};
ProxyConfig make_proxy_config(ProxyKind kind, int available_instructions);

struct HackCurvePoint {
  int n = 0;
  double mean_proxy_reward = 0.0;
  double mean_gold_reward = 0.0;
  double mean_selected_length = 0.0;
};

struct HackCurve {
  std::string proxy;
  std::vector<HackCurvePoint> points;
  int trials = 0;
  uint64_t seed = 0;
};

// Best-of-n sweep: `trials` independent selections per rung. Candidate
// sets are keyed by (seed, n, trial, index) only, so different proxies
// evaluated with the same seed see identical candidates (common random
// numbers).
HackCurve hack_curve(const ProxyConfig& proxy, const ModelParams& params,
                     const InstructionSet& set, const GoldModel& gold,
                     const CandidateSampler& sampler, const std::vector<int>& n_ladder,
                     int trials, uint64_t seed, int threads = 1);

// Columns: proxy,n,mean_proxy_reward,mean_gold_reward,mean_selected_length,
// trials,seed
void write_hack_curve_csv(const std::vector<HackCurve>& curves, const std::string& path);

}  // namespace pira
