#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metadse/arch_mask.hpp"
#include "metadse/episode.hpp"
#include "metadse/surrogate.hpp"
#include "metadse/workload_oracle.hpp"

namespace metadse {

// sqrt(mean((y − ŷ)²))
double rmse(std::span<const double> pred, std::span<const double> actual);
// mean(|y − ŷ| / |y|)·100
double mape(std::span<const double> pred, std::span<const double> actual);
// 1 − Σ(y − ŷ)² / Σ(y − ȳ)²
double explained_variance(std::span<const double> pred, std::span<const double> actual);

struct MeanCi {
  double mean = 0;
  double half_width = 0;  // 95 %, normal approximation
  std::size_t n = 0;
};
MeanCi mean_ci(std::span<const double> values);

// Geometric mean with each value floored at 1e-12.
double geomean(std::span<const double> values);

struct MetricSummary {
  MeanCi rmse, mape, ev;
};

struct WorkloadReport {
  std::string workload_id;
  std::size_t tasks = 0;
  std::size_t failed = 0;
  std::uint64_t task_digest = 0;
  std::size_t mask_resets = 0;
  std::map<std::string, MetricSummary> outputs;  // keyed by "ipc" / "power"
};

struct EvalReport {
  std::vector<WorkloadReport> workloads;
  std::map<std::string, std::string> metadata;  // seeds, config hash, ...

  // Mean over workloads of the per-workload mean metric.
  double aggregate(const std::string& output, const std::string& metric) const;
  // Geometric mean over workloads of the per-workload mean RMSE.
  double geomean_rmse(const std::string& output) const;
  std::size_t failed() const;

  std::string to_csv(const std::string& arm = "model") const;
  std::string to_markdown(const std::string& title) const;
};

struct ProtocolConfig {
  std::size_t tasks = 1000;
  std::size_t support = 5;
  std::size_t query = 45;
  std::size_t steps = 10;
  double lr = 1e-5;  // γ, cosine-annealed
  std::uint64_t seed = 0;
};

// An adaptation arm: starting parameters plus an optional mask.
struct Arm {
  std::string name;
  const ParamVector* theta = nullptr;
  const ArchMask* mask = nullptr;
  bool learn_mask = true;
};

// Per test workload: `tasks` episodes, adapt on support, score the query set
// in label units. Task failures are counted, not fatal.
EvalReport run_protocol(const Surrogate& model, const TargetScaler& scaler, const Arm& arm,
                        const std::vector<WorkloadSource>& sources, const ProtocolConfig& config, std::size_t threads);

struct AblationResult {
  std::vector<std::string> arms;
  std::vector<EvalReport> reports;  // same order as arms
  // Each arm's report must carry the same task digests.
  bool identical_task_streams() const;
  std::string to_csv() const;
  std::string to_markdown() const;
};

// Evaluates arms on identical task sequences.
AblationResult ablation(const Surrogate& model, const TargetScaler& scaler, const std::vector<Arm>& arms,
                        const std::vector<WorkloadSource>& sources, const ProtocolConfig& config, std::size_t threads);

}  // namespace metadse
