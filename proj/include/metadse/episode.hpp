#pragma once

#include <array>
#include <string>
#include <vector>

#include "metadse/sample.hpp"
#include "metadse/surrogate.hpp"
#include "metadse/task_sampler.hpp"
#include "metadse/workload_oracle.hpp"

namespace metadse {

// Affine map between labels and model targets: target = (label − mean)/scale
// for each active output. Fitted once on the training workloads and shipped
// inside the checkpoint, so every adaptation arm sees the same units.
struct TargetScaler {
  OutputKind outputs = OutputKind::Ipc;
  std::array<double, 2> mean{0.0, 0.0};   // ipc, power
  std::array<double, 2> scale{1.0, 1.0};

  static TargetScaler identity(OutputKind outputs);
  static TargetScaler fit(OutputKind outputs, const std::vector<WorkloadSource>& sources, std::uint64_t seed);

  // Label indices (0 = ipc, 1 = power) of the model's output columns.
  std::vector<std::size_t> columns() const;
  std::vector<double> to_model(const Labels& l) const;
  double to_label(std::size_t output, double model_value) const;
  double label_of(std::size_t output, const Labels& l) const;

  friend bool operator==(const TargetScaler&, const TargetScaler&) = default;
};

Batch make_batch(const std::vector<Sample>& samples, const TargetScaler& scaler);

// A task converted to model units.
struct Episode {
  std::string workload_id;
  Batch support;
  Batch query;
  std::vector<Sample> query_samples;  // original labels, for scoring
  std::uint64_t digest = 0;
};

Episode to_episode(const Task& task, const TargetScaler& scaler);

}  // namespace metadse
