#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pira {

struct InstructionSet;

// Closed whitespace-token vocabulary. Ids are dense 0..size()-1 with the
// special tokens pinned at the front. Synthetic vocabularies lay out the
// remaining ids as: instruction words, "good" content tokens, "bad"
// content tokens, then filler.
class Vocab {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kBos = 1;
  static constexpr int32_t kSep = 2;
  static constexpr int32_t kUnk = 3;
  static constexpr int32_t kQuestionHeader = 4;  // literal "question:"
  static constexpr int32_t kResponseHeader = 5;  // literal "response:"
  static constexpr int kNumSpecial = 6;
  static constexpr int kNumGood = 12;
  static constexpr int kNumBad = 12;

  // Deterministic synthetic vocabulary covering the instruction set's
  // words. Throws ValidationError if vocab_size cannot fit the layout.
  static Vocab build(int vocab_size, const InstructionSet& instructions);
  // Reconstructs a vocabulary from an explicit token list (checkpoints).
  static Vocab from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int32_t id) const { return tokens_[id]; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Id lookup; unknown words map to kUnk.
  int32_t id(std::string_view word) const;
  bool contains(std::string_view word) const;

  // Whitespace tokenization over the closed vocabulary.
  std::vector<int32_t> tokenize(std::string_view text) const;
  std::string detokenize(const std::vector<int32_t>& ids) const;

  // Synthetic-layout accessors (empty when the layout is absent).
  const std::vector<int32_t>& good_ids() const { return good_ids_; }
  const std::vector<int32_t>& bad_ids() const { return bad_ids_; }
  const std::vector<int32_t>& filler_ids() const { return filler_ids_; }

 private:
  void index_tokens();
  void scan_layout();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> index_;
  std::vector<int32_t> good_ids_, bad_ids_, filler_ids_;
};

}  // namespace pira
