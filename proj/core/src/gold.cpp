#include "pira/gold.h"

namespace pira {

GoldModel::GoldModel(const Vocab& vocab, double w_good, double w_bad)
    : good_ids_(vocab.good_ids()),
      bad_ids_(vocab.bad_ids()),
      kind_(static_cast<size_t>(vocab.size()), 0),
      w_good_(w_good),
      w_bad_(w_bad) {
  for (int32_t id : good_ids_) kind_[static_cast<size_t>(id)] = 1;
  for (int32_t id : bad_ids_) kind_[static_cast<size_t>(id)] = -1;
}

double GoldModel::score_tokens(std::span<const int32_t> tokens) const {
  int64_t good = 0, bad = 0;
  for (int32_t t : tokens) {
    if (t < 0 || static_cast<size_t>(t) >= kind_.size()) continue;
    if (kind_[static_cast<size_t>(t)] > 0) ++good;
    else if (kind_[static_cast<size_t>(t)] < 0) ++bad;
  }
  return w_good_ * static_cast<double>(good) - w_bad_ * static_cast<double>(bad);
}

double GoldModel::score_text(const std::string& text, const Vocab& vocab) const {
  const std::vector<int32_t> ids = vocab.tokenize(text);
  return score_tokens(ids);
}

}  // namespace pira
