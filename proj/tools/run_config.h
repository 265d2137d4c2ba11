#pragma once

#include <string>
#include <vector>

#include "ini.h"
#include "pira/aggregate.h"
#include "pira/corpus.h"
#include "pira/hacksim.h"
#include "pira/model.h"
#include "pira/train.h"

namespace pira::cli {

// Everything a subcommand can consume: the per-module configs plus paths
// and subcommand-specific knobs. One INI file round-trips the whole thing.
struct RunConfig {
  SyntheticCorpusConfig corpus;
  ModelConfig model;
  TrainConfig train;
  AggregationConfig agg;
  CandidateSampler sampler;

  struct Eval {
    int repeats = 20;
    bool with_stability = false;
    bool with_latency = false;
    int max_examples = 0;  // 0 = all
    std::string checkpoints;  // comma list for multi-checkpoint accuracy
  } eval;

  struct Hack {
    std::string proxy = "pira";
    std::vector<int> n_ladder = {1, 2, 4, 8, 16};
    int trials = 200;
    uint64_t seed = 7;
  } hack;

  struct GradCheck {
    int min_params = 200;
    double epsilon = 1e-3;
    double threshold = 1e-3;
    uint64_t seed = 42;
  } gradcheck;

  struct Bench {
    int timed_calls = 50;
  } bench;

  struct Paths {
    std::string corpus_train;
    std::string corpus_test;
    std::string instructions;  // empty = built-in default set
    std::string checkpoint;
    std::string out = "out";
  } paths;

  int threads = 1;

  static RunConfig from_ini(const IniFile& ini);
  IniFile to_ini() const;
};

std::vector<int> parse_int_list(const std::string& text, const std::string& field);
std::string format_int_list(const std::vector<int>& v);

}  // namespace pira::cli
