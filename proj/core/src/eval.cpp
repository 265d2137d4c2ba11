#include "pira/eval.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pira/errors.h"
#include "pira/parallel.h"
#include "pira/rng.h"

namespace pira {

namespace {
constexpr uint64_t kTagExample = 0x6578;
constexpr uint64_t kTagRepeat = 0x7270;

using Clock = std::chrono::steady_clock;

double median_us(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename Fn>
std::vector<double> time_calls(std::span<const PreferenceExample> examples, int warmup,
                               int timed, Fn&& fn) {
  std::vector<double> us;
  us.reserve(static_cast<size_t>(timed));
  for (int i = 0; i < warmup + timed; ++i) {
    const PreferenceExample& ex = examples[static_cast<size_t>(i) % examples.size()];
    const auto t0 = Clock::now();
    fn(ex);
    const auto t1 = Clock::now();
    if (i >= warmup) {
      us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
  }
  return us;
}

}  // namespace

double mean_of(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v;
  return values.empty() ? 0.0 : acc / static_cast<double>(values.size());
}

double sample_std(std::span<const double> values) {
  const size_t n = values.size();
  if (n < 2) return 0.0;
  const double mu = mean_of(values);
  double acc = 0.0;
  for (double v : values) acc += (v - mu) * (v - mu);
  return std::sqrt(acc / static_cast<double>(n - 1));
}

PairwiseAccuracyResult pairwise_accuracy(const ModelParams& params,
                                         const InstructionSet& set,
                                         std::span<const PreferenceExample> test,
                                         const AggregationConfig& agg, InputFormat format,
                                         int threads) {
  if (test.empty()) throw ValidationError("test", "must not be empty");
  const int n = static_cast<int>(test.size());
  std::vector<double> outcome(static_cast<size_t>(n));
  std::vector<uint8_t> tie(static_cast<size_t>(n), 0);
  parallel_for(n, threads, [&](int i) {
    AggregationConfig cfg_c = agg;
    cfg_c.base_seed = derive_key(agg.base_seed, kTagExample, static_cast<uint64_t>(i), 0);
    AggregationConfig cfg_r = agg;
    cfg_r.base_seed = derive_key(agg.base_seed, kTagExample, static_cast<uint64_t>(i), 1);
    const PreferenceExample& ex = test[static_cast<size_t>(i)];
    const double rc = dual_aggregate(params, set, ex.question, ex.chosen, cfg_c, format).final;
    const double rr =
        dual_aggregate(params, set, ex.question, ex.rejected, cfg_r, format).final;
    if (rc > rr) {
      outcome[static_cast<size_t>(i)] = 1.0;
    } else if (rc == rr) {
      outcome[static_cast<size_t>(i)] = 0.5;
      tie[static_cast<size_t>(i)] = 1;
    }
  });
  PairwiseAccuracyResult res;
  res.n = n;
  for (int i = 0; i < n; ++i) {
    res.accuracy += outcome[static_cast<size_t>(i)];
    res.ties += tie[static_cast<size_t>(i)];
  }
  res.accuracy /= n;
  return res;
}

StabilityReport reward_stability(const ModelParams& params, const InstructionSet& set,
                                 std::span<const PreferenceExample> examples,
                                 const AggregationConfig& agg, int repeats,
                                 InputFormat format, int threads) {
  if (repeats < 2) throw ValidationError("repeats", "must be at least 2");
  if (examples.empty()) throw ValidationError("examples", "must not be empty");
  const int n = static_cast<int>(examples.size());
  StabilityReport report;
  report.per_example_std.resize(static_cast<size_t>(n));
  parallel_for(n, threads, [&](int e) {
    std::vector<double> values(static_cast<size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
      AggregationConfig cfg = agg;
      cfg.base_seed = derive_key(agg.base_seed, kTagRepeat, static_cast<uint64_t>(e),
                                 static_cast<uint64_t>(r));
      const PreferenceExample& ex = examples[static_cast<size_t>(e)];
      values[static_cast<size_t>(r)] =
          dual_aggregate(params, set, ex.question, ex.chosen, cfg, format).final;
    }
    report.per_example_std[static_cast<size_t>(e)] = sample_std(values);
  });
  report.mean_std = mean_of(report.per_example_std);
  return report;
}

LatencyReport latency_overhead(const ModelParams& params, const InstructionSet& set,
                               std::span<const PreferenceExample> examples,
                               const AggregationConfig& agg, int timed_calls) {
  if (examples.size() < 50) {
    throw ValidationError("examples", "latency measurement needs at least 50 examples");
  }
  const int timed = std::max(timed_calls, 50);
  constexpr int kWarmup = 5;

  AggregationConfig base = agg;
  base.M = 1;
  base.delta_low = 0.0f;
  base.delta_high = 0.0f;

  auto agg_us = time_calls(examples, kWarmup, timed, [&](const PreferenceExample& ex) {
    dual_aggregate(params, set, ex.question, ex.chosen, agg);
  });
  auto base_us = time_calls(examples, kWarmup, timed, [&](const PreferenceExample& ex) {
    dual_aggregate(params, set, ex.question, ex.chosen, base);
  });
  auto rerun_us = time_calls(examples, kWarmup, timed, [&](const PreferenceExample& ex) {
    dual_aggregate_backbone_rerun(params, set, ex.question, ex.chosen, agg);
  });

  LatencyReport r;
  r.median_agg_us = median_us(agg_us);
  r.median_base_us = median_us(base_us);
  r.median_rerun_us = median_us(rerun_us);
  r.overhead_pct = 100.0 * (r.median_agg_us / r.median_base_us - 1.0);
  r.rerun_ratio = r.median_rerun_us / r.median_agg_us;
  return r;
}

void write_eval_report_json(const EvalReport& r, const AggregationConfig& agg,
                            const std::string& path) {
  nlohmann::json j;
  j["pair_accuracy"] = r.pair_accuracy;
  j["ties"] = r.ties;
  j["n_pairs"] = r.n_pairs;
  j["K"] = agg.K;
  j["M"] = agg.M;
  j["delta_low"] = agg.delta_low;
  j["delta_high"] = agg.delta_high;
  j["base_seed"] = agg.base_seed;
  if (r.accuracy_std) j["accuracy_std"] = *r.accuracy_std;
  if (r.reward_std) j["reward_std"] = *r.reward_std;
  if (r.latency_overhead_pct) j["latency_overhead_pct"] = *r.latency_overhead_pct;
  if (r.rerun_ratio) j["rerun_ratio"] = *r.rerun_ratio;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write eval report: " + path);
  out << j.dump(2) << '\n';
}

void write_eval_report_csv(const EvalReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write eval report: " + path);
  out << "pair_accuracy,ties,n_pairs,accuracy_std,reward_std,latency_overhead_pct,"
         "rerun_ratio\n";
  char buf[256];
  auto opt = [](const std::optional<double>& v) { return v ? *v : std::nan(""); };
  std::snprintf(buf, sizeof(buf), "%.9g,%d,%d,%.9g,%.9g,%.9g,%.9g\n", r.pair_accuracy,
                r.ties, r.n_pairs, opt(r.accuracy_std), opt(r.reward_std),
                opt(r.latency_overhead_pct), opt(r.rerun_ratio));
  out << buf;
}

}  // namespace pira
