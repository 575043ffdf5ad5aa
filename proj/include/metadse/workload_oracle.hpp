#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metadse/design_space.hpp"
#include "metadse/matrix.hpp"
#include "metadse/sample.hpp"

namespace metadse {

// Sparse pairwise term between two design-space parameters.
struct Interaction {
  std::size_t a = 0, b = 0;
  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Analytical stand-in for a simulated workload: maps a core configuration to
// (IPC, power). IPC is 1/CPI where CPI adds a min-of-bottlenecks issue term,
// branch and memory stall terms; a product of sparse pairwise interaction
// factors modulates it. Power is a baseline plus per-structure costs, a cubic
// frequency term and an activity term. Noise is multiplicative log-normal.
struct WorkloadSurface {
  // Unit coefficients in [0, 1]; see the kCoeff* layout in the source.
  std::vector<double> coeffs;
  // Shared across a family; coeffs carries one strength per entry at the tail.
  std::vector<Interaction> interactions;
  std::string id;
  double noise = 0.02;
  std::uint64_t noise_seed = 0;

  static constexpr std::size_t kCoreCoeffs = 30;

  Labels evaluate(const DesignSpace& space, const DesignPoint& point, std::uint64_t sample_seed) const;
  Labels evaluate_noiseless(const DesignSpace& space, const DesignPoint& point) const;

  friend bool operator==(const WorkloadSurface&, const WorkloadSurface&) = default;
};

struct FamilyOptions {
  double dissimilarity = 0.6;
  double noise = 0.02;
  std::size_t interactions = 8;
};

// c_i = (1−d)·c_base + d·c_i_random for every unit coefficient.
std::vector<WorkloadSurface> gen_family(std::size_t n_workloads, const FamilyOptions& options, std::uint64_t seed);

std::string workload_name(std::size_t index);

// Where samples for one workload come from: a synthetic surface or a loaded
// labeled dataset. Immutable once built.
class WorkloadSource {
 public:
  static WorkloadSource synthetic(WorkloadSurface surface, DesignSpace space);
  static WorkloadSource dataset(std::string id, DesignSpace space, std::vector<Sample> rows);

  const std::string& id() const noexcept;
  const DesignSpace& space() const noexcept;
  bool is_synthetic() const noexcept;
  const WorkloadSurface* surface() const noexcept;
  // Dataset rows; empty for synthetic sources.
  const std::vector<Sample>& rows() const noexcept;
  // Number of distinct design points the source can yield.
  std::uint64_t capacity() const;

  // n samples at pairwise distinct design points, deterministic in seed.
  // Throws SourceExhausted if fewer than n distinct points exist.
  std::vector<Sample> draw(std::size_t n, std::uint64_t seed) const;

  Sample label(const DesignPoint& point, std::uint64_t sample_seed) const;  // synthetic only

 private:
  struct State;
  explicit WorkloadSource(std::shared_ptr<const State> s) : s_(std::move(s)) {}
  std::shared_ptr<const State> s_;
};

// 1-D Wasserstein distance between two empirical distributions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

struct SimilarityMatrix {
  std::vector<std::string> ids;
  Matrix distance;  // symmetric, zero diagonal
  std::string to_csv() const;
  // Character-shaded grid; darker means less similar.
  std::string render() const;
};

// Pairwise W1 on IPC labels. Synthetic sources are probed on a shared set of
// n_probe uniform points; dataset sources contribute all their rows.
SimilarityMatrix similarity_matrix(const std::vector<WorkloadSource>& sources, std::size_t n_probe, std::uint64_t seed);

// Mean of the strictly upper triangle.
double mean_off_diagonal(const Matrix& m);

}  // namespace metadse
