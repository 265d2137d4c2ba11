#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pira/vocab.h"

namespace pira {

// Ground-truth response scorer for synthetic corpora: a per-token weight
// on designated good/bad content tokens. The score never reads response
// length; length is the planted spurious feature, not a quality signal.
class GoldModel {
 public:
  GoldModel() = default;
  GoldModel(const Vocab& vocab, double w_good, double w_bad);

  double score_tokens(std::span<const int32_t> tokens) const;
  double score_text(const std::string& text, const Vocab& vocab) const;

  const std::vector<int32_t>& good_ids() const { return good_ids_; }
  const std::vector<int32_t>& bad_ids() const { return bad_ids_; }
  double w_good() const { return w_good_; }
  double w_bad() const { return w_bad_; }

 private:
  std::vector<int32_t> good_ids_, bad_ids_;
  std::vector<int8_t> kind_;  // per token id: +1 good, -1 bad, 0 neutral
  double w_good_ = 1.0, w_bad_ = 1.0;
};

}  // namespace pira
