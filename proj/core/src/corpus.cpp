#include "pira/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pira/errors.h"
#include "pira/rng.h"

namespace pira {

namespace {

using nlohmann::json;

// Quality (per-token good-content probability) range shared by the train
// and test laws; the splits differ only in whether quality is coupled to
// length.
constexpr double kQualityLo = 0.05;
constexpr double kQualityHi = 0.45;
constexpr double kBadRate = 0.05;
// Required gold separation between the two responses of a pair, in content
// token units. Keeps pairs decidable by an ideal content scorer.
constexpr int kMinMarginUnits = 2;

struct ResponseDraw {
  std::string text;
  int good_count = 0;
  int bad_count = 0;
};

int uniform_in(CounterRng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.next_below(static_cast<uint64_t>(hi - lo + 1)));
}

std::string sample_question(const SyntheticCorpusConfig& cfg, const Vocab& vocab,
                            CounterRng& rng) {
  const int len = uniform_in(rng, cfg.question_len_min, cfg.question_len_max);
  std::string out;
  const auto& filler = vocab.filler_ids();
  for (int i = 0; i < len; ++i) {
    if (i) out += ' ';
    out += vocab.token(filler[rng.next_below(filler.size())]);
  }
  return out;
}

ResponseDraw sample_response(const SyntheticCorpusConfig& cfg, const Vocab& vocab,
                             double length_coupling, CounterRng& rng) {
  const int lo = cfg.response_len_min, hi = cfg.response_len_max;
  const int len = uniform_in(rng, lo, hi);
  const double ramp = hi > lo ? static_cast<double>(len - lo) / (hi - lo) : 0.5;
  const double mix = (1.0 - length_coupling) * rng.next_double() + length_coupling * ramp;
  const double q_good = kQualityLo + (kQualityHi - kQualityLo) * mix;

  ResponseDraw draw;
  const auto& good = vocab.good_ids();
  const auto& bad = vocab.bad_ids();
  const auto& filler = vocab.filler_ids();
  for (int i = 0; i < len; ++i) {
    if (i) draw.text += ' ';
    const double u = rng.next_double();
    if (u < q_good) {
      draw.text += vocab.token(good[rng.next_below(good.size())]);
      ++draw.good_count;
    } else if (u < q_good + kBadRate) {
      draw.text += vocab.token(bad[rng.next_below(bad.size())]);
      ++draw.bad_count;
    } else {
      draw.text += vocab.token(filler[rng.next_below(filler.size())]);
    }
  }
  return draw;
}

PreferenceExample sample_example(const SyntheticCorpusConfig& cfg, const Vocab& vocab,
                                 const GoldModel& gold, double length_coupling,
                                 uint64_t key) {
  CounterRng rng(key);
  PreferenceExample ex;
  ex.question = sample_question(cfg, vocab, rng);

  ResponseDraw a, b;
  int units_a = 0, units_b = 0;
  for (int attempt = 0;; ++attempt) {
    a = sample_response(cfg, vocab, length_coupling, rng);
    b = sample_response(cfg, vocab, length_coupling, rng);
    units_a = a.good_count - a.bad_count;
    units_b = b.good_count - b.bad_count;
    const int sep = std::abs(units_a - units_b);
    if (sep >= kMinMarginUnits || (attempt >= 64 && sep > 0)) break;
  }
  const bool a_wins = units_a > units_b;
  const ResponseDraw& win = a_wins ? a : b;
  const ResponseDraw& lose = a_wins ? b : a;
  const double margin = gold.score_text(win.text, vocab) - gold.score_text(lose.text, vocab);

  if (rng.next_double() < cfg.label_noise) {
    ex.chosen = lose.text;
    ex.rejected = win.text;
    ex.gold_margin.reset();
  } else {
    ex.chosen = win.text;
    ex.rejected = lose.text;
    ex.gold_margin = margin;
  }
  return ex;
}

}  // namespace

void SyntheticCorpusConfig::validate() const {
  if (vocab_size < 8) throw ValidationError("vocab_size", "must be at least 8");
  if (num_examples < 1) throw ValidationError("num_examples", "must be positive");
  if (question_len_min < 1 || question_len_min > question_len_max) {
    throw ValidationError("question_len", "need 1 <= min <= max");
  }
  if (response_len_min < 1 || response_len_min > response_len_max) {
    throw ValidationError("response_len", "need 1 <= min <= max");
  }
  if (!(good_token_weight > 0.0)) {
    throw ValidationError("good_token_weight", "must be positive");
  }
  if (spurious_length_weight < 0.0 || spurious_length_weight > 1.0) {
    throw ValidationError("spurious_length_weight", "must lie in [0, 1]");
  }
  if (label_noise < 0.0 || label_noise >= 0.5) {
    throw ValidationError("label_noise", "must lie in [0, 0.5)");
  }
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  return generate_synthetic_corpus(cfg, default_instruction_set());
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg,
                                          const InstructionSet& instructions) {
  cfg.validate();
  SyntheticCorpus corpus;
  corpus.vocab = Vocab::build(cfg.vocab_size, instructions);
  corpus.gold = GoldModel(corpus.vocab, cfg.good_token_weight, cfg.good_token_weight);

  const int n_test = cfg.num_examples / 5;
  const int n_train = cfg.num_examples - n_test;
  corpus.train.reserve(n_train);
  corpus.test.reserve(n_test);
  for (int i = 0; i < n_train; ++i) {
    corpus.train.push_back(sample_example(cfg, corpus.vocab, corpus.gold,
                                          cfg.spurious_length_weight,
                                          derive_key(cfg.seed, 0x7261, i)));
  }
  // Test split: length decoupled from quality (coupling 0).
  for (int i = 0; i < n_test; ++i) {
    corpus.test.push_back(sample_example(cfg, corpus.vocab, corpus.gold, 0.0,
                                         derive_key(cfg.seed, 0x7465, i)));
  }
  return corpus;
}

std::vector<PreferenceExample> load_preference_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open preference file: " + path);
  std::vector<PreferenceExample> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    PreferenceExample ex;
    for (const char* field : {"prompt", "chosen", "rejected"}) {
      if (!obj.contains(field) || !obj[field].is_string()) {
        throw ParseError(std::string("missing or non-string field '") + field + "'", line_no);
      }
    }
    ex.question = obj["prompt"].get<std::string>();
    ex.chosen = obj["chosen"].get<std::string>();
    ex.rejected = obj["rejected"].get<std::string>();
    if (obj.contains("gold_margin")) {
      if (!obj["gold_margin"].is_number()) {
        throw ParseError("field 'gold_margin' must be a number", line_no);
      }
      ex.gold_margin = obj["gold_margin"].get<double>();
    }
    if (ex.chosen == ex.rejected) {
      throw ParseError("chosen and rejected responses are identical", line_no);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void save_preference_jsonl(const std::vector<PreferenceExample>& examples,
                           const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write preference file: " + path);
  for (const PreferenceExample& ex : examples) {
    json obj;
    obj["prompt"] = ex.question;
    obj["chosen"] = ex.chosen;
    obj["rejected"] = ex.rejected;
    if (ex.gold_margin) obj["gold_margin"] = *ex.gold_margin;
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace pira
