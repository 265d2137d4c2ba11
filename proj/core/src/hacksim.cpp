#include "pira/hacksim.h"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "pira/errors.h"
#include "pira/parallel.h"
#include "pira/rng.h"

namespace pira {

namespace {
constexpr uint64_t kTagQuestion = 0x71;
constexpr uint64_t kTagCandidate = 0x63616e64;
constexpr uint64_t kTagTrial = 0x7472696c;
constexpr uint64_t kTagScore = 0x7363726f;

int uniform_in(CounterRng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.next_below(static_cast<uint64_t>(hi - lo + 1)));
}
}  // namespace

void CandidateSampler::validate() const {
  if (len_min < 1 || len_min > len_sat || len_sat > len_max) {
    throw ValidationError("sampler_len", "need 1 <= len_min <= len_sat <= len_max");
  }
  if (!(quality_lo >= 0.0 && quality_lo <= quality_hi && quality_hi <= 1.0)) {
    throw ValidationError("sampler_quality", "need 0 <= lo <= hi <= 1");
  }
  if (coupling < 0.0 || coupling > 1.0) {
    throw ValidationError("coupling", "must lie in [0, 1]");
  }
  if (tail_quality_drop < 0.0 || tail_quality_drop > 1.0) {
    throw ValidationError("tail_quality_drop", "must lie in [0, 1]");
  }
  if (bad_base < 0.0 || bad_base + bad_tail_rise > 1.0) {
    throw ValidationError("bad_rate", "bad-token rate must stay in [0, 1]");
  }
  if (question_len_min < 1 || question_len_min > question_len_max) {
    throw ValidationError("question_len", "need 1 <= min <= max");
  }
}

std::string CandidateSampler::sample_question(const Vocab& vocab, uint64_t key) const {
  CounterRng rng(key);
  const int len = uniform_in(rng, question_len_min, question_len_max);
  const auto& filler = vocab.filler_ids();
  std::string out;
  for (int i = 0; i < len; ++i) {
    if (i) out += ' ';
    out += vocab.token(filler[rng.next_below(filler.size())]);
  }
  return out;
}

std::string CandidateSampler::sample_response(const Vocab& vocab, uint64_t key) const {
  CounterRng rng(key);
  const int len = uniform_in(rng, len_min, len_max);

  double quality, bad_rate;
  const double in_ramp =
      len_sat > len_min
          ? std::min(1.0, static_cast<double>(len - len_min) / (len_sat - len_min))
          : 1.0;
  const double mix = (1.0 - coupling) * rng.next_double() + coupling * in_ramp;
  quality = quality_lo + (quality_hi - quality_lo) * mix;
  bad_rate = bad_base;
  if (len > len_sat && len_max > len_sat) {
    const double x = static_cast<double>(len - len_sat) / (len_max - len_sat);
    quality *= 1.0 - tail_quality_drop * x;
    bad_rate += bad_tail_rise * x;
  }

  const auto& good = vocab.good_ids();
  const auto& bad = vocab.bad_ids();
  const auto& filler = vocab.filler_ids();
  std::string out;
  for (int i = 0; i < len; ++i) {
    if (i) out += ' ';
    const double u = rng.next_double();
    if (u < quality) {
      out += vocab.token(good[rng.next_below(good.size())]);
    } else if (u < quality + bad_rate) {
      out += vocab.token(bad[rng.next_below(bad.size())]);
    } else {
      out += vocab.token(filler[rng.next_below(filler.size())]);
    }
  }
  return out;
}

BestOfNResult best_of_n(const ProxyScorer& proxy, const CandidateSampler& sampler,
                        const Vocab& vocab, const std::string& question, int n,
                        uint64_t key) {
  if (n < 1) throw ValidationError("n", "must be at least 1");
  BestOfNResult res;
  res.scores.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const uint64_t cand_key = derive_key(key, kTagCandidate, static_cast<uint64_t>(i));
    const std::string candidate = sampler.sample_response(vocab, cand_key);
    const double score = proxy(question, candidate, cand_key);
    if (i == 0 || score > res.scores[static_cast<size_t>(res.selected)]) {
      res.selected = i;
      res.response = candidate;
    }
    res.scores.push_back(score);
  }
  return res;
}

const char* proxy_name(ProxyKind kind) {
  switch (kind) {
    case ProxyKind::baseline: return "baseline";
    case ProxyKind::thomas_fixed_025: return "thomas_fixed_0.25";
    case ProxyKind::pira: return "pira";
  }
  return "unknown";
}

ProxyKind proxy_kind_from_name(const std::string& name) {
  if (name == "baseline") return ProxyKind::baseline;
  if (name == "thomas_fixed_0.25" || name == "thomas") return ProxyKind::thomas_fixed_025;
  if (name == "pira") return ProxyKind::pira;
  throw ValidationError("proxy", "unknown proxy '" + name +
                                     "' (want baseline | thomas_fixed_0.25 | pira)");
}

ProxyConfig make_proxy_config(ProxyKind kind, int available_instructions) {
  ProxyConfig cfg;
  cfg.kind = kind;
  switch (kind) {
    case ProxyKind::baseline:
      cfg.format = InputFormat::concat;
      cfg.agg.K = 1;
      cfg.agg.M = 1;
      cfg.agg.delta_low = cfg.agg.delta_high = 0.0f;
      break;
    case ProxyKind::thomas_fixed_025:
      cfg.format = InputFormat::instructed;
      cfg.agg.K = 1;
      cfg.agg.M = 4;
      cfg.agg.delta_low = cfg.agg.delta_high = 0.25f;
      break;
    case ProxyKind::pira:
      cfg.format = InputFormat::instructed;
      cfg.agg.K = std::min(6, available_instructions);
      cfg.agg.M = 12;
      cfg.agg.delta_low = 0.1f;
      cfg.agg.delta_high = 0.4f;
      break;
  }
  return cfg;
}

HackCurve hack_curve(const ProxyConfig& proxy, const ModelParams& params,
                     const InstructionSet& set, const GoldModel& gold,
                     const CandidateSampler& sampler, const std::vector<int>& n_ladder,
                     int trials, uint64_t seed, int threads) {
  sampler.validate();
  if (n_ladder.empty()) throw ValidationError("n_ladder", "must not be empty");
  for (size_t i = 0; i < n_ladder.size(); ++i) {
    if (n_ladder[i] < 1 || (i > 0 && n_ladder[i] <= n_ladder[i - 1])) {
      throw ValidationError("n_ladder", "must be ascending and positive");
    }
  }
  if (trials < 200) throw ValidationError("trials", "must be at least 200");

  HackCurve curve;
  curve.proxy = proxy_name(proxy.kind);
  curve.trials = trials;
  curve.seed = seed;

  const ProxyScorer scorer = [&](const std::string& q, const std::string& a,
                                 uint64_t cand_key) {
    AggregationConfig cfg = proxy.agg;
    cfg.base_seed = derive_key(cand_key, kTagScore);
    return dual_aggregate(params, set, q, a, cfg, proxy.format).final;
  };

  for (int n : n_ladder) {
    std::vector<double> proxies(static_cast<size_t>(trials));
    std::vector<double> golds(static_cast<size_t>(trials));
    std::vector<double> lens(static_cast<size_t>(trials));
    parallel_for(trials, threads, [&](int trial) {
      // Question and candidate keys depend only on (seed, n, trial), never
      // on the proxy: common random numbers across proxy configs.
      const uint64_t trial_key = derive_key(seed, kTagTrial, static_cast<uint64_t>(n),
                                            static_cast<uint64_t>(trial));
      const std::string question =
          sampler.sample_question(params.vocab, derive_key(trial_key, kTagQuestion));
      const BestOfNResult r =
          best_of_n(scorer, sampler, params.vocab, question, n, trial_key);
      proxies[static_cast<size_t>(trial)] = r.scores[static_cast<size_t>(r.selected)];
      golds[static_cast<size_t>(trial)] = gold.score_text(r.response, params.vocab);
      lens[static_cast<size_t>(trial)] =
          static_cast<double>(params.vocab.tokenize(r.response).size());
    });
    double mp = 0.0, mg = 0.0, ml = 0.0;
    for (int t = 0; t < trials; ++t) {
      mp += proxies[static_cast<size_t>(t)];
      mg += golds[static_cast<size_t>(t)];
      ml += lens[static_cast<size_t>(t)];
    }
    curve.points.push_back({n, mp / trials, mg / trials, ml / trials});
  }
  return curve;
}

void write_hack_curve_csv(const std::vector<HackCurve>& curves, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write hack curve file: " + path);
  out << "proxy,n,mean_proxy_reward,mean_gold_reward,mean_selected_length,trials,seed\n";
  char buf[256];
  for (const HackCurve& c : curves) {
    for (const HackCurvePoint& p : c.points) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%.9g,%d,%llu\n", c.proxy.c_str(),
                    p.n, p.mean_proxy_reward, p.mean_gold_reward, p.mean_selected_length,
                    c.trials, static_cast<unsigned long long>(c.seed));
      out << buf;
    }
  }
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace pira
