#include "pira/finite_diff.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "pira/errors.h"
#include "pira/rng.h"

namespace pira {

FiniteDiffReport finite_diff_check(const std::function<double()>& loss_fn,
                                   std::vector<FdTarget>& targets, double epsilon,
                                   int samples, uint64_t sample_seed, double denom_floor) {
  if (targets.empty()) throw ContractError("finite_diff_check: no targets");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon", "must be positive");

  const double base0 = loss_fn();
  const double base1 = loss_fn();
  if (base0 != base1) {
    throw DeterminismError(
        "finite_diff_check: loss function is not deterministic (did a dropout "
        "mask get re-sampled between calls?)");
  }

  int64_t total = 0;
  for (const FdTarget& t : targets) {
    if (!t.param || t.param->numel() != t.analytic.numel()) {
      throw ContractError("finite_diff_check: analytic grad shape mismatch for " + t.name);
    }
    total += t.param->numel();
  }
  const int want = static_cast<int>(std::min<int64_t>(samples, total));

  // Distinct global indices, uniform over all parameter entries.
  CounterRng rng(derive_key(sample_seed, 0x5a3d));
  std::unordered_set<int64_t> picked;
  picked.reserve(static_cast<size_t>(want) * 2);
  while (static_cast<int>(picked.size()) < want) {
    picked.insert(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(total))));
  }
  std::vector<int64_t> order(picked.begin(), picked.end());
  std::sort(order.begin(), order.end());

  FiniteDiffReport report;
  report.epsilon = epsilon;
  for (int64_t g : order) {
    int64_t off = g;
    size_t ti = 0;
    while (off >= targets[ti].param->numel()) {
      off -= targets[ti].param->numel();
      ++ti;
    }
    Tensor& p = *targets[ti].param;
    const float orig = p.at(off);
    const float hi = static_cast<float>(static_cast<double>(orig) + epsilon);
    const float lo = static_cast<float>(static_cast<double>(orig) - epsilon);

    p.at(off) = hi;
    const double lp = loss_fn();
    p.at(off) = lo;
    const double lm = loss_fn();
    p.at(off) = orig;

    const double fd = (lp - lm) / (static_cast<double>(hi) - static_cast<double>(lo));
    const double an = targets[ti].analytic.at(off);
    const double rel =
        std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), denom_floor});

    ++report.checked;
    report.max_rel_error = std::max(report.max_rel_error, rel);
    FiniteDiffReport::Entry e{targets[ti].name, off, an, fd, rel};
    report.worst.push_back(e);
    std::sort(report.worst.begin(), report.worst.end(),
              [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
    if (report.worst.size() > 5) report.worst.resize(5);
  }
  return report;
}

}  // namespace pira
