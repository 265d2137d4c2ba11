#include "pira/vocab.h"

#include <cstdio>

#include "pira/errors.h"
#include "pira/instruction.h"

namespace pira {

namespace {

const char* kSpecialNames[Vocab::kNumSpecial] = {"<pad>", "<bos>", "<sep>",
                                                 "<unk>", "question:", "response:"};

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

std::string numbered(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
  return buf;
}

}  // namespace

Vocab Vocab::build(int vocab_size, const InstructionSet& instructions) {
  std::vector<std::string> tokens(kSpecialNames, kSpecialNames + kNumSpecial);
  std::unordered_map<std::string, int32_t> seen;
  for (const std::string& t : tokens) seen.emplace(t, 1);

  // Instruction words in first-occurrence order keep the layout a pure
  // function of the instruction set.
  for (const InstructionTemplate& tpl : instructions.templates) {
    for (std::string& w : split_whitespace(tpl.text)) {
      if (seen.emplace(w, 1).second) tokens.push_back(std::move(w));
    }
  }
  for (int i = 0; i < kNumGood; ++i) tokens.push_back(numbered("good", i));
  for (int i = 0; i < kNumBad; ++i) tokens.push_back(numbered("bad", i));

  const int used = static_cast<int>(tokens.size());
  if (vocab_size < used + 10) {
    throw ValidationError("vocab_size",
                          "needs at least " + std::to_string(used + 10) +
                              " entries to cover specials, instruction words, "
                              "content tokens, and some filler");
  }
  for (int i = 0; i < vocab_size - used; ++i) tokens.push_back(numbered("fill", i));
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 8) throw ValidationError("vocab", "needs at least 8 tokens");
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.index_tokens();
  v.scan_layout();
  return v;
}

void Vocab::index_tokens() {
  index_.reserve(tokens_.size());
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int32_t>(i)).second) {
      throw ValidationError("vocab", "duplicate token '" + tokens_[i] + "'");
    }
  }
  for (int i = 0; i < kNumSpecial; ++i) {
    if (tokens_[i] != kSpecialNames[i]) {
      throw ValidationError("vocab", "special token slot " + std::to_string(i) +
                                         " must hold '" + kSpecialNames[i] + "'");
    }
  }
}

void Vocab::scan_layout() {
  for (size_t i = 0; i < tokens_.size(); ++i) {
    const std::string& t = tokens_[i];
    if (t.rfind("good", 0) == 0 && t.size() == 7) good_ids_.push_back(static_cast<int32_t>(i));
    if (t.rfind("bad", 0) == 0 && t.size() == 6) bad_ids_.push_back(static_cast<int32_t>(i));
    if (t.rfind("fill", 0) == 0 && t.size() == 7) filler_ids_.push_back(static_cast<int32_t>(i));
  }
}

int32_t Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view word) const {
  return index_.count(std::string(word)) > 0;
}

std::vector<int32_t> Vocab::tokenize(std::string_view text) const {
  std::vector<int32_t> ids;
  for (const std::string& w : split_whitespace(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocab::detokenize(const std::vector<int32_t>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += tokens_.at(static_cast<size_t>(ids[i]));
  }
  return out;
}

}  // namespace pira
