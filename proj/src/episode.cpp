#include "metadse/episode.hpp"

#include <cmath>

#include "metadse/errors.hpp"
#include "metadse/rng.hpp"

namespace metadse {

TargetScaler TargetScaler::identity(OutputKind outputs) {
  TargetScaler s;
  s.outputs = outputs;
  return s;
}

TargetScaler TargetScaler::fit(OutputKind outputs, const std::vector<WorkloadSource>& sources, std::uint64_t seed) {
  if (sources.empty()) throw ContractError("fitting target scales needs at least one workload");
  constexpr std::size_t kProbe = 1000;
  std::vector<Labels> pool;
  for (std::size_t w = 0; w < sources.size(); ++w) {
    const auto& src = sources[w];
    if (src.is_synthetic()) {
      for (const auto& r : src.draw(std::min<std::uint64_t>(kProbe, src.capacity()),
                                    derive_seed(seed, {hash_tag("scaler"), w})))
        pool.push_back(r.labels);
    } else {
      for (const auto& r : src.rows()) pool.push_back(r.labels);
    }
  }
  if (pool.empty()) throw ContractError("fitting target scales needs labeled samples");
  TargetScaler s;
  s.outputs = outputs;
  const double n = static_cast<double>(pool.size());
  for (std::size_t k = 0; k < 2; ++k) {
    double sum = 0;
    for (const auto& l : pool) sum += s.label_of(k, l);
    s.mean[k] = sum / n;
    double sq = 0;
    for (const auto& l : pool) sq += (s.label_of(k, l) - s.mean[k]) * (s.label_of(k, l) - s.mean[k]);
    const double sd = std::sqrt(sq / n);
    s.scale[k] = sd > 0 ? sd : 1.0;
  }
  return s;
}

std::vector<std::size_t> TargetScaler::columns() const {
  switch (outputs) {
    case OutputKind::Ipc: return {0};
    case OutputKind::Power: return {1};
    case OutputKind::Both: return {0, 1};
  }
  return {};
}

double TargetScaler::label_of(std::size_t output, const Labels& l) const { return output == 0 ? l.ipc : l.power; }

std::vector<double> TargetScaler::to_model(const Labels& l) const {
  std::vector<double> out;
  for (std::size_t c : columns()) out.push_back((label_of(c, l) - mean[c]) / scale[c]);
  return out;
}

double TargetScaler::to_label(std::size_t output, double model_value) const {
  return model_value * scale[output] + mean[output];
}

Batch make_batch(const std::vector<Sample>& samples, const TargetScaler& scaler) {
  if (samples.empty()) throw ContractError("empty batch");
  const std::size_t p = samples.front().features.size();
  const auto cols = scaler.columns();
  Batch b{Matrix(samples.size(), p), Matrix(samples.size(), cols.size())};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.size() != p) throw ShapeError("samples disagree on feature length");
    std::copy(samples[i].features.begin(), samples[i].features.end(), b.features.row_ptr(i));
    const auto t = scaler.to_model(samples[i].labels);
    std::copy(t.begin(), t.end(), b.targets.row_ptr(i));
  }
  return b;
}

Episode to_episode(const Task& task, const TargetScaler& scaler) {
  return Episode{task.workload_id, make_batch(task.support, scaler), make_batch(task.query, scaler), task.query,
                 task.digest()};
}

}  // namespace metadse
