#include "metadse/wam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "metadse/errors.hpp"

namespace metadse {

std::set<std::pair<std::size_t, std::size_t>> retained_entries(const MaskCandidateStore& store,
                                                               const MaskOptions& options) {
  if (store.empty()) throw ContractError("cannot build a mask from an empty candidate store");
  if (!(options.keep_fraction > 0 && options.keep_fraction <= 1))
    throw ConfigError("keep fraction must lie in (0, 1]");
  if (!(options.min_support >= 0 && options.min_support <= 1)) throw ConfigError("min support must lie in [0, 1]");

  const std::size_t p = store.entries().begin()->second.sum.rows();
  const auto top = static_cast<std::size_t>(std::ceil(options.keep_fraction * static_cast<double>(p) - 1e-12));
  std::vector<std::size_t> votes(p * p, 0);
  std::vector<std::size_t> order(p);
  for (const auto& [id, entry] : store.entries()) {
    const Matrix mean = store.mean(id);
    if (mean.rows() != p || mean.cols() != p) throw ShapeError("candidate matrices disagree in size");
    for (std::size_t i = 0; i < p; ++i) {
      std::iota(order.begin(), order.end(), 0);
      // Largest first; ties go to the lower column index.
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean(i, a) > mean(i, b); });
      for (std::size_t r = 0; r < std::min(top, p); ++r) ++votes[i * p + order[r]];
    }
  }
  const double workloads = static_cast<double>(store.workloads());
  std::set<std::pair<std::size_t, std::size_t>> kept;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      if (static_cast<double>(votes[i * p + j]) / workloads >= options.min_support) kept.insert({i, j});
  return kept;
}

ArchMask build_mask(const MaskCandidateStore& store, const MaskOptions& options) {
  if (!(options.floor > 0 && options.floor <= 1)) throw ConfigError("mask floor must lie in (0, 1]");
  const auto kept = retained_entries(store, options);
  const std::size_t p = store.entries().begin()->second.sum.rows();
  ArchMask mask{Matrix(p, p, options.floor), false};
  for (std::size_t i = 0; i < p; ++i) mask.m(i, i) = 1.0;
  for (const auto& [i, j] : kept) mask.m(i, j) = 1.0;
  return mask;
}

Adapted adapt_with_mask(const Surrogate& model, const ParamVector& theta, const Batch& support, const ArchMask& mask,
                        std::size_t steps, double lr, bool learn_mask) {
  mask.validate();
  AdaptOptions opt{steps, LrSchedule::cosine(lr, steps), learn_mask};
  return adapt(model, theta, support, opt, &mask);
}

}  // namespace metadse
