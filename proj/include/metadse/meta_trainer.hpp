#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "metadse/arch_mask.hpp"
#include "metadse/attention_store.hpp"
#include "metadse/episode.hpp"
#include "metadse/optim.hpp"
#include "metadse/surrogate.hpp"

namespace metadse {

struct MetaConfig {
  std::size_t epochs = 15;
  std::size_t tasks_per_workload = 200;
  std::size_t val_tasks_per_workload = 50;
  std::size_t inner_steps = 5;
  double inner_lr = 1e-5;  // α
  double outer_lr = 1e-4;  // β
  std::size_t meta_batch = 4;
  std::size_t support = 5;
  std::size_t query = 45;
  double clip_norm = 0;  // 0 disables

  void validate() const;
};

// Learning rate per adaptation step.
struct LrSchedule {
  enum class Kind { Constant, Cosine };
  Kind kind = Kind::Constant;
  double base = 0;
  std::size_t steps = 0;

  static LrSchedule constant(double lr) { return {Kind::Constant, lr, 0}; }
  // base·(1 + cos(π·t/steps))/2
  static LrSchedule cosine(double lr, std::size_t steps) { return {Kind::Cosine, lr, steps}; }
  double at(std::size_t t) const;
};

struct AdaptOptions {
  std::size_t steps = 0;
  LrSchedule schedule;
  bool learn_mask = false;  // update the mask jointly with θ
};

struct Adapted {
  ParamVector theta;
  std::optional<ArchMask> mask;
  std::size_t mask_resets = 0;  // rows reset to uniform after clamping
};

// SGD on the support MSE starting from a copy of θ. When `sink` is given, the
// last-layer attention of every forward is collected under the batch's
// workload id.
Adapted adapt(const Surrogate& model, const ParamVector& theta, const Batch& support, const AdaptOptions& options,
              const ArchMask* mask = nullptr, MaskCandidateStore* sink = nullptr,
              const std::string& workload_id = {});

// θ̂ after `steps` constant-rate SGD updates; steps = 0 returns θ unchanged.
ParamVector inner_adapt(const Surrogate& model, const ParamVector& theta, const Batch& support, std::size_t steps,
                        double lr, const ArchMask* mask = nullptr);

struct MetaGradient {
  std::vector<double> grad;  // mean over episodes, ascending index order
  double mean_query_loss = 0;
};

// First-order meta-gradient: per episode, adapt on support, then take the
// query-loss gradient at θ̂.
MetaGradient meta_gradient(const Surrogate& model, const ParamVector& theta, const std::vector<const Episode*>& episodes,
                           const MetaConfig& config, std::size_t threads, MaskCandidateStore* sink = nullptr);

struct MetaState {
  ParamVector theta;
  AdamState adam;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
};

// Tracks the lowest validation loss seen and the parameters that produced it.
struct BestTracker {
  double loss = std::numeric_limits<double>::infinity();
  std::size_t epoch = 0;
  ParamVector theta;
  bool seen = false;

  // Returns true when `val_loss` strictly improves on the best so far.
  bool offer(double val_loss, const ParamVector& params, std::size_t at_epoch);
};

// One pass over all episodes in a seeded shuffled order, one Adam step per
// meta-batch. Returns the mean query loss at the adapted parameters.
double meta_epoch(const Surrogate& model, MetaState& state, const std::vector<Episode>& episodes,
                  const MetaConfig& config, std::size_t threads, MaskCandidateStore* sink = nullptr);

// Mean query loss after inner adaptation on each episode. θ is not modified.
double meta_validate(const Surrogate& model, const ParamVector& theta, const std::vector<Episode>& episodes,
                     const MetaConfig& config, std::size_t threads, MaskCandidateStore* sink = nullptr);

// Reference path for the inner_steps = 0 limit: Adam on the mean of per-set
// query gradients at θ, one step per group of `sets_per_step` sets.
void train_supervised(const Surrogate& model, ParamVector& theta, AdamState& adam, const std::vector<Batch>& sets,
                      std::size_t sets_per_step, double lr);

struct EpochStats {
  std::size_t epoch = 0;     // 0 = before training
  double train_loss = 0;     // NaN for epoch 0
  double val_loss = 0;
  double seconds = 0;
  bool improved = false;
};

struct PretrainResult {
  ParamVector best_theta;
  double best_val = 0;
  std::size_t best_epoch = 0;
  std::vector<EpochStats> log;
  MaskCandidateStore candidates;
};

// Meta-training over the training workloads with per-epoch validation; the
// returned θ* is the best validation checkpoint. Mask candidates come from
// every forward of the final epoch, validation included.
PretrainResult pretrain(const Surrogate& model, const std::vector<WorkloadSource>& train,
                        const std::vector<WorkloadSource>& val, const TargetScaler& scaler, const MetaConfig& config,
                        std::uint64_t seed, std::size_t threads,
                        const std::function<void(const EpochStats&, const ParamVector&)>& on_epoch = {});

}  // namespace metadse
