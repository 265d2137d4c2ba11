#include "pira/aggregate.h"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "pira/errors.h"
#include "pira/rng.h"

namespace pira {

namespace {
constexpr uint64_t kTagRates = 0x72617465;
constexpr uint64_t kTagPass = 0x70617373;
constexpr uint64_t kTagRow = 0x726f77;
constexpr uint64_t kTagShared = 0x73687264;

StochasticHeadAverage head_passes(const ModelParams& params, const Tensor& u,
                                  const std::vector<float>& rates, uint64_t pass_key) {
  StochasticHeadAverage out;
  out.deltas = rates;
  out.samples.reserve(rates.size());
  double acc = 0.0;
  for (size_t m = 0; m < rates.size(); ++m) {
    const float r = head_forward(params, u, rates[m], derive_key(pass_key, m));
    out.samples.push_back(r);
    acc += r;
  }
  out.mean = acc / static_cast<double>(rates.size());
  return out;
}

std::vector<int32_t> assemble_for(const ModelParams& params, const InstructionSet& set,
                                  InputFormat format, int k, const std::string& q,
                                  const std::string& a) {
  if (format == InputFormat::concat) return assemble_concat(q, a, params.vocab);
  return assemble_input(set, k, q, a, params.vocab);
}

RewardBreakdown aggregate_impl(const ModelParams& params, const InstructionSet& set,
                               const std::string& question, const std::string& response,
                               const AggregationConfig& cfg, InputFormat format,
                               bool rerun_backbone) {
  const int available = format == InputFormat::concat ? 1 : set.size();
  cfg.validate(available);
  const std::vector<int> ids = cfg.resolved_instruction_ids();

  std::vector<float> shared;
  if (cfg.shared_rates) {
    shared = sample_dropout_rates(cfg.M, derive_key(cfg.base_seed, kTagShared),
                                  cfg.delta_low, cfg.delta_high);
  }

  RewardBreakdown out;
  out.instruction_ids = ids;
  out.samples.resize(ids.size());
  out.deltas.resize(ids.size());
  out.per_instruction.resize(ids.size());
  double acc = 0.0;
  for (size_t row = 0; row < ids.size(); ++row) {
    const std::vector<int32_t> tokens =
        assemble_for(params, set, format, ids[row], question, response);
    const uint64_t row_key = derive_key(cfg.base_seed, kTagRow, row);
    StochasticHeadAverage avg;
    if (rerun_backbone) {
      // Full-model Monte Carlo reference: the backbone runs once per cell.
      const std::vector<float> rates =
          cfg.shared_rates ? shared
                           : sample_dropout_rates(cfg.M, derive_key(row_key, kTagRates),
                                                  cfg.delta_low, cfg.delta_high);
      avg.deltas = rates;
      double row_acc = 0.0;
      const uint64_t pass_key =
          cfg.shared_rates ? derive_key(cfg.base_seed, kTagRow, row, kTagPass)
                           : derive_key(row_key, kTagPass);
      for (int m = 0; m < cfg.M; ++m) {
        const Tensor u = backbone_forward(params, tokens);
        const float r = head_forward(params, u, rates[m], derive_key(pass_key, m));
        avg.samples.push_back(r);
        row_acc += r;
      }
      avg.mean = row_acc / cfg.M;
    } else {
      const Tensor u = backbone_forward(params, tokens);
      if (cfg.shared_rates) {
        avg = head_passes(params, u, shared,
                          derive_key(cfg.base_seed, kTagRow, row, kTagPass));
      } else {
        avg = stochastic_head_average(params, u, cfg.M, row_key, cfg.delta_low,
                                      cfg.delta_high);
      }
    }
    out.samples[row] = std::move(avg.samples);
    out.deltas[row] = std::move(avg.deltas);
    out.per_instruction[row] = avg.mean;
    acc += avg.mean;
  }
  out.final = acc / static_cast<double>(ids.size());
  return out;
}

}  // namespace

void AggregationConfig::validate(int available_instructions) const {
  if (K < 1) throw ValidationError("K", "must be at least 1");
  if (M < 1) throw ValidationError("M", "must be at least 1");
  if (!(delta_low >= 0.0f && delta_low <= delta_high && delta_high < 1.0f)) {
    throw ValidationError("delta", "need 0 <= delta_low <= delta_high < 1");
  }
  if (instruction_ids.empty()) {
    if (K > available_instructions) {
      throw ValidationError("K", "only " + std::to_string(available_instructions) +
                                     " instructions are available");
    }
  } else {
    if (static_cast<int>(instruction_ids.size()) != K) {
      throw ValidationError("instruction_ids", "must list exactly K entries");
    }
    for (int id : instruction_ids) {
      if (id < 0 || id >= available_instructions) {
        throw ValidationError("instruction_ids",
                              "index " + std::to_string(id) + " out of range");
      }
    }
  }
}

std::vector<int> AggregationConfig::resolved_instruction_ids() const {
  if (!instruction_ids.empty()) return instruction_ids;
  std::vector<int> ids(static_cast<size_t>(K));
  for (int i = 0; i < K; ++i) ids[static_cast<size_t>(i)] = i;
  return ids;
}

std::vector<float> sample_dropout_rates(int m, uint64_t rng_key, float lo, float hi) {
  if (m < 1) throw ValidationError("M", "must be at least 1");
  if (!(lo >= 0.0f && lo <= hi && hi < 1.0f)) {
    throw ValidationError("delta", "need 0 <= lo <= hi < 1");
  }
  CounterRng rng(rng_key);
  std::vector<float> rates(static_cast<size_t>(m));
  for (float& r : rates) r = lo + rng.next_float_closed() * (hi - lo);
  return rates;
}

StochasticHeadAverage stochastic_head_average(const ModelParams& params, const Tensor& u,
                                              int m, uint64_t rng_key, float lo, float hi) {
  const std::vector<float> rates =
      sample_dropout_rates(m, derive_key(rng_key, kTagRates), lo, hi);
  return head_passes(params, u, rates, derive_key(rng_key, kTagPass));
}

double instruction_average(const ModelParams& params, const InstructionSet& set,
                           const std::string& question, const std::string& response,
                           const AggregationConfig& cfg) {
  AggregationConfig det = cfg;
  det.M = 1;
  det.delta_low = 0.0f;
  det.delta_high = 0.0f;
  return aggregate_impl(params, set, question, response, det, InputFormat::instructed,
                        false)
      .final;
}

RewardBreakdown dual_aggregate(const ModelParams& params, const InstructionSet& set,
                               const std::string& question, const std::string& response,
                               const AggregationConfig& cfg, InputFormat format) {
  return aggregate_impl(params, set, question, response, cfg, format, false);
}

RewardBreakdown dual_aggregate_backbone_rerun(const ModelParams& params,
                                              const InstructionSet& set,
                                              const std::string& question,
                                              const std::string& response,
                                              const AggregationConfig& cfg) {
  return aggregate_impl(params, set, question, response, cfg, InputFormat::instructed,
                        true);
}

void write_breakdown_csv(const RewardBreakdown& b, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write breakdown file: " + path);
  out << "k,m,delta,reward\n";
  char buf[128];
  for (size_t k = 0; k < b.samples.size(); ++k) {
    for (size_t m = 0; m < b.samples[k].size(); ++m) {
      std::snprintf(buf, sizeof(buf), "%d,%zu,%.9g,%.9g\n", b.instruction_ids[k], m,
                    static_cast<double>(b.deltas[k][m]),
                    static_cast<double>(b.samples[k][m]));
      out << buf;
    }
  }
  for (size_t k = 0; k < b.per_instruction.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%d,Rstoc,,%.9g\n", b.instruction_ids[k],
                  b.per_instruction[k]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "final,,,%.9g\n", b.final);
  out << buf;
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace pira
