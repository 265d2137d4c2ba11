#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pira/gold.h"
#include "pira/instruction.h"
#include "pira/vocab.h"

namespace pira {

struct PreferenceExample {
  std::string question;
  std::string chosen;
  std::string rejected;
  // gold(chosen) - gold(rejected); present only when the label agrees with
  // the gold model (noise-flipped labels carry no margin).
  std::optional<double> gold_margin;

  bool operator==(const PreferenceExample&) const = default;
};

struct SyntheticCorpusConfig {
  int vocab_size = 512;
  int num_examples = 2500;  // split 80/20 into train/test
  int question_len_min = 3;
  int question_len_max = 8;
  int response_len_min = 4;
  int response_len_max = 16;
  double good_token_weight = 1.0;
  // Strength of the planted length/quality coupling in the train split:
  // 0 leaves response quality independent of length, 1 ties it entirely to
  // length. The test split is always generated with the coupling off, so
  // held-out evaluation is distribution-shifted with respect to length.
  double spurious_length_weight = 0.15;
  double label_noise = 0.0;
  uint64_t seed = 42;

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<PreferenceExample> train;
  std::vector<PreferenceExample> test;
  GoldModel gold;
  Vocab vocab;
};

// Pure function of the config (and the instruction set, which only feeds
// the vocabulary layout). Response quality q in [0.05, 0.45] is mixed from
// an i.i.d. draw and a length ramp with weight spurious_length_weight;
// each pair is labeled by realized gold scores and requires at least two
// content-token units of separation, then flipped with label_noise.
SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg);
SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg,
                                          const InstructionSet& instructions);

// Line-delimited JSON with fields "prompt", "chosen", "rejected" and
// optional "gold_margin". UTF-8, LF.
std::vector<PreferenceExample> load_preference_jsonl(const std::string& path);
void save_preference_jsonl(const std::vector<PreferenceExample>& examples,
                           const std::string& path);

}  // namespace pira
