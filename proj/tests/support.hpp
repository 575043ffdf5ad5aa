#pragma once

// Shared helpers for the unit tests.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metadse/autodiff.hpp"
#include "metadse/matrix.hpp"
#include "metadse/rng.hpp"

namespace metadse::test {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& x : m.data()) x = rng.uniform(lo, hi);
  return m;
}

// Values bounded away from zero, for ops with a kink there.
inline Matrix away_from_zero(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.data()) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return m;
}

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

// |a − n| ≤ tol·max(|a|, |n|), with an absolute floor for gradients that
// vanish up to rounding.
inline bool close(double analytic, double numeric, double tol = 1e-4, double floor = 1e-8) {
  const double err = std::abs(analytic - numeric);
  return err <= floor || err <= tol * std::max(std::abs(analytic), std::abs(numeric));
}

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::string first_failure;
};

// `build` maps leaves to a 1×1 node on a fresh tape. Compares the tape's
// gradient with central differences (step h) for every entry of `inputs`
// whose index in `differentiable` is true.
inline GradCheck check_gradients(const std::vector<Matrix>& inputs, const std::vector<bool>& differentiable,
                                 const std::function<Var(Tape&, const std::vector<Var>&)>& build, double h = 1e-5,
                                 double tol = 1e-4) {
  auto evaluate = [&](const std::vector<Matrix>& values) {
    Tape t;
    std::vector<Var> leaves;
    for (std::size_t i = 0; i < values.size(); ++i) leaves.push_back(t.leaf(values[i], differentiable[i]));
    return t.value(build(t, leaves))(0, 0);
  };
  Tape tape;
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) leaves.push_back(tape.leaf(inputs[i], differentiable[i]));
  tape.backward(build(tape, leaves));

  GradCheck out;
  std::vector<Matrix> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!differentiable[i]) continue;
    const Matrix& g = tape.grad(leaves[i]);
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x = inputs[i].data()[k];
      probe[i].data()[k] = x + h;
      const double up = evaluate(probe);
      probe[i].data()[k] = x - h;
      const double down = evaluate(probe);
      probe[i].data()[k] = x;
      const double numeric = (up - down) / (2 * h);
      ++out.checked;
      if (!close(g.data()[k], numeric, tol)) {
        if (out.failed++ == 0)
          out.first_failure = "input " + std::to_string(i) + " entry " + std::to_string(k) + ": analytic " +
                              std::to_string(g.data()[k]) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return out;
}

}  // namespace metadse::test
