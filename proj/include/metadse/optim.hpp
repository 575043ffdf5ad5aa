#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace metadse {

// p ← p − lr·g
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update. Moment buffers are sized on first use.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr);

// Scales grads in place so their L2 norm is at most max_norm; returns the
// norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(std::span<double> grads, double max_norm);

}  // namespace metadse
