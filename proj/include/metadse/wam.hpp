#pragma once

#include <cstddef>
#include <set>
#include <utility>

#include "metadse/arch_mask.hpp"
#include "metadse/attention_store.hpp"
#include "metadse/meta_trainer.hpp"

namespace metadse {

struct MaskOptions {
  double keep_fraction = 0.25;  // k: top ⌈k·P⌉ entries per row are salient
  double min_support = 0.5;     // f: fraction of workloads that must agree
  double floor = 0.05;          // ε for entries that are not retained
};

// Entries (i, j) whose salient-vote fraction across workloads is ≥ f.
std::set<std::pair<std::size_t, std::size_t>> retained_entries(const MaskCandidateStore& store,
                                                               const MaskOptions& options);

// M = 1 on retained entries and the diagonal, floor elsewhere; not learnable.
ArchMask build_mask(const MaskCandidateStore& store, const MaskOptions& options = {});

// Joint SGD on (θ̂*, M) over the support set with a cosine-annealed rate
// from γ to 0. The mask is clamped to [0, 1] after every step. With
// learn_mask = false only θ̂* moves.
Adapted adapt_with_mask(const Surrogate& model, const ParamVector& theta, const Batch& support, const ArchMask& mask,
                        std::size_t steps, double lr, bool learn_mask = true);

}  // namespace metadse
