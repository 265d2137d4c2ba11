#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pira/corpus.h"
#include "pira/errors.h"
#include "pira/instruction.h"
#include "pira/rng.h"
#include "pira/vocab.h"

using namespace pira;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("pira_data_test_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("bundled instruction file: ten templates, verbatim first instruction") {
  const InstructionSet set = load_instruction_set(std::string(PIRA_DATA_DIR) +
                                                  "/instructions_default.json");
  CHECK(set.size() == 10);
  CHECK(set.templates[0].text.rfind("Evaluate whether the response demonstrates", 0) == 0);
  // The built-in copy and the shipped file must not drift apart.
  const InstructionSet& builtin = default_instruction_set();
  REQUIRE(builtin.size() == set.size());
  CHECK(builtin.slot_template == set.slot_template);
  for (int k = 0; k < set.size(); ++k) {
    CHECK(builtin.templates[k].id == set.templates[k].id);
    CHECK(builtin.templates[k].text == set.templates[k].text);
  }
}

TEST_CASE("single-template file loads; duplicate ids rejected") {
  const fs::path dir = temp_dir();
  const fs::path one = dir / "one.json";
  {
    std::ofstream out(one);
    out << R"({"slot_template":"{t} {q} {a}","instructions":[{"id":1,"text":"Judge it."}]})";
  }
  CHECK(load_instruction_set(one.string()).size() == 1);

  const fs::path dup = dir / "dup.json";
  {
    std::ofstream out(dup);
    out << R"({"slot_template":"{t} {q} {a}","instructions":[)"
        << R"({"id":1,"text":"a"},{"id":1,"text":"b"}]})";
  }
  CHECK_THROWS_AS(load_instruction_set(dup.string()), ValidationError);

  CHECK_THROWS_AS(
      parse_instruction_set(R"({"slot_template":"{t} {q} {a}","instructions":[]})"),
      ValidationError);
  CHECK_THROWS_AS(parse_instruction_set("{nope"), ParseError);
  CHECK_THROWS_AS(
      parse_instruction_set(R"({"slot_template":"{q} {t} {a}","instructions":[{"id":1,"text":"x"}]})"),
      ValidationError);
  CHECK_THROWS_AS(load_instruction_set((dir / "missing.json").string()), IoError);
}

TEST_CASE("assemble_input mirrors manual concatenation") {
  const InstructionSet& set = default_instruction_set();
  const Vocab vocab = Vocab::build(512, set);
  const std::string q = vocab.token(vocab.filler_ids()[0]) + " " +
                        vocab.token(vocab.filler_ids()[1]);
  const std::string a = vocab.token(vocab.good_ids()[0]) + " " +
                        vocab.token(vocab.filler_ids()[2]) + " " +
                        vocab.token(vocab.bad_ids()[0]);

  for (int k : {0, 3, 9}) {
    const std::vector<int32_t> got = assemble_input(set, k, q, a, vocab);

    // Independent oracle: concatenate the segments as text, tokenize each
    // piece directly, and splice in the separators/headers.
    std::vector<int32_t> want;
    want.push_back(Vocab::kBos);
    for (int32_t t : vocab.tokenize(set.templates[k].text)) want.push_back(t);
    want.push_back(Vocab::kSep);
    want.push_back(Vocab::kQuestionHeader);
    for (int32_t t : vocab.tokenize(q)) want.push_back(t);
    want.push_back(Vocab::kSep);
    want.push_back(Vocab::kResponseHeader);
    for (int32_t t : vocab.tokenize(a)) want.push_back(t);
    CHECK(got == want);

    // Length bookkeeping: BOS plus two separators and two headers around
    // the three tokenized segments.
    const size_t expect = 1 + vocab.tokenize(set.templates[k].text).size() + 2 + 2 +
                          vocab.tokenize(q).size() + vocab.tokenize(a).size();
    CHECK(got.size() == expect);
  }
}

TEST_CASE("assemble_input: segment order and empty response") {
  const InstructionSet& set = default_instruction_set();
  const Vocab vocab = Vocab::build(512, set);
  const std::vector<int32_t> ids = assemble_input(set, 0, "fill000", "", vocab);
  CHECK(ids.back() == Vocab::kResponseHeader);  // nothing after the header
  CHECK(ids.front() == Vocab::kBos);

  // Unknown words map to the reserved UNK id.
  const std::vector<int32_t> unk = assemble_input(set, 0, "zzz-not-in-vocab", "", vocab);
  CHECK(unk[2 + vocab.tokenize(set.templates[0].text).size()] == Vocab::kUnk);
}

TEST_CASE("assemble_input distinguishes templates") {
  const InstructionSet& set = default_instruction_set();
  const Vocab vocab = Vocab::build(512, set);
  CounterRng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int k1 = static_cast<int>(rng.next_below(10));
    const int k2 = static_cast<int>(rng.next_below(10));
    const auto s1 = assemble_input(set, k1, "fill001", "fill002", vocab);
    const auto s2 = assemble_input(set, k2, "fill001", "fill002", vocab);
    if (k1 == k2) CHECK(s1 == s2);
    else CHECK(s1 != s2);
  }
}

TEST_CASE("corpus generation is a pure function of the config") {
  SyntheticCorpusConfig cfg;
  cfg.num_examples = 60;
  cfg.seed = 7;
  cfg.label_noise = 0.1;
  const SyntheticCorpus a = generate_synthetic_corpus(cfg);
  const SyntheticCorpus b = generate_synthetic_corpus(cfg);
  REQUIRE(a.train.size() == b.train.size());
  CHECK(a.train.size() == 48);  // 80/20 split
  CHECK(a.test.size() == 12);
  for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i] == b.train[i]);
  for (size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i] == b.test[i]);

  cfg.seed = 8;
  const SyntheticCorpus c = generate_synthetic_corpus(cfg);
  CHECK(c.train[0] != a.train[0]);
}

TEST_CASE("noiseless corpora carry positive gold margins everywhere") {
  SyntheticCorpusConfig cfg;
  cfg.num_examples = 300;
  cfg.label_noise = 0.0;
  const SyntheticCorpus corpus = generate_synthetic_corpus(cfg);
  for (const auto* split : {&corpus.train, &corpus.test}) {
    for (const PreferenceExample& ex : *split) {
      REQUIRE(ex.gold_margin.has_value());
      CHECK(*ex.gold_margin > 0.0);
      // Margin must agree with an independent recount.
      const double recount = corpus.gold.score_text(ex.chosen, corpus.vocab) -
                             corpus.gold.score_text(ex.rejected, corpus.vocab);
      CHECK(*ex.gold_margin == doctest::Approx(recount));
    }
  }
}

TEST_CASE("label noise flips the stated fraction of pairs") {
  SyntheticCorpusConfig cfg;
  cfg.num_examples = 12500;  // 10k train pairs
  cfg.label_noise = 0.25;
  cfg.seed = 99;
  const SyntheticCorpus corpus = generate_synthetic_corpus(cfg);
  REQUIRE(corpus.train.size() == 10000);
  int flipped = 0;
  for (const PreferenceExample& ex : corpus.train) {
    // Oracle: recompute gold for both sides and count disagreements.
    const double chosen_gold = corpus.gold.score_text(ex.chosen, corpus.vocab);
    const double rejected_gold = corpus.gold.score_text(ex.rejected, corpus.vocab);
    if (chosen_gold < rejected_gold) {
      ++flipped;
      CHECK_FALSE(ex.gold_margin.has_value());
    }
  }
  const double frac = flipped / 10000.0;
  CHECK(frac > 0.23);
  CHECK(frac < 0.27);
}

TEST_CASE("train split plants the length correlation, test split does not") {
  SyntheticCorpusConfig cfg;
  cfg.num_examples = 5000;
  cfg.spurious_length_weight = 0.6;
  cfg.seed = 5;
  const SyntheticCorpus corpus = generate_synthetic_corpus(cfg);
  auto longer_chosen_rate = [&](const std::vector<PreferenceExample>& xs) {
    int longer = 0, total = 0;
    for (const PreferenceExample& ex : xs) {
      const size_t lc = corpus.vocab.tokenize(ex.chosen).size();
      const size_t lr = corpus.vocab.tokenize(ex.rejected).size();
      if (lc == lr) continue;
      ++total;
      if (lc > lr) ++longer;
    }
    return static_cast<double>(longer) / total;
  };
  CHECK(longer_chosen_rate(corpus.train) > 0.75);
  CHECK(longer_chosen_rate(corpus.test) == doctest::Approx(0.5).epsilon(0.12));
}

TEST_CASE("preference JSONL round-trips and reports line errors") {
  const fs::path dir = temp_dir();
  const fs::path path = dir / "pairs.jsonl";

  SyntheticCorpusConfig cfg;
  cfg.num_examples = 120;
  cfg.label_noise = 0.2;
  const SyntheticCorpus corpus = generate_synthetic_corpus(cfg);
  save_preference_jsonl(corpus.train, path.string());
  const auto loaded = load_preference_jsonl(path.string());
  REQUIRE(loaded.size() == corpus.train.size());
  for (size_t i = 0; i < loaded.size(); ++i) CHECK(loaded[i] == corpus.train[i]);

  {
    std::ofstream out(dir / "bad.jsonl");
    out << R"({"prompt":"a","chosen":"b","rejected":"c"})" << "\n";
    out << R"({"prompt":"a","chosen":"b"})" << "\n";
  }
  try {
    load_preference_jsonl((dir / "bad.jsonl").string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("rejected") != std::string::npos);
  }

  {
    std::ofstream out(dir / "garbled.jsonl");
    out << "not json at all\n";
  }
  CHECK_THROWS_AS(load_preference_jsonl((dir / "garbled.jsonl").string()), ParseError);
  CHECK_THROWS_AS(load_preference_jsonl((dir / "nope.jsonl").string()), IoError);

  // Three well-formed lines load in order.
  {
    std::ofstream out(dir / "three.jsonl");
    out << R"({"prompt":"q1","chosen":"c1","rejected":"r1"})" << "\n";
    out << R"({"prompt":"q2","chosen":"c2","rejected":"r2","gold_margin":1.5})" << "\n";
    out << R"({"prompt":"q3","chosen":"c3","rejected":"r3"})" << "\n";
  }
  const auto three = load_preference_jsonl((dir / "three.jsonl").string());
  REQUIRE(three.size() == 3);
  CHECK(three[0].question == "q1");
  CHECK(three[1].gold_margin == 1.5);
  CHECK(three[2].rejected == "r3");
}

TEST_CASE("vocab layout and config validation") {
  const Vocab vocab = Vocab::build(512, default_instruction_set());
  CHECK(vocab.size() == 512);
  CHECK(vocab.good_ids().size() == 12);
  CHECK(vocab.bad_ids().size() == 12);
  CHECK(vocab.filler_ids().size() > 100);
  CHECK(vocab.id("question:") == Vocab::kQuestionHeader);
  CHECK(vocab.id("no-such-word") == Vocab::kUnk);
  CHECK(vocab.token(Vocab::kBos) == "<bos>");
  CHECK_THROWS_AS(Vocab::build(64, default_instruction_set()), ValidationError);

  SyntheticCorpusConfig bad;
  bad.label_noise = 0.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.response_len_min = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_SUITE_END();
