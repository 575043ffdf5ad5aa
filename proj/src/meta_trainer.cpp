#include "metadse/meta_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "metadse/errors.hpp"
#include "metadse/parallel.hpp"
#include "metadse/rng.hpp"

namespace metadse {

void MetaConfig::validate() const {
  if (epochs == 0 || tasks_per_workload == 0 || val_tasks_per_workload == 0 || meta_batch == 0 || support == 0 ||
      query == 0)
    throw ConfigError("meta-training counts must be positive");
  if (!(inner_lr >= 0) || !(outer_lr > 0)) throw ConfigError("learning rates must be positive");
  if (!(clip_norm >= 0)) throw ConfigError("clip norm must be non-negative");
}

double LrSchedule::at(std::size_t t) const {
  if (kind == Kind::Constant || steps == 0) return base;
  return base * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(steps))) / 2.0;
}

namespace {

void require_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

Adapted adapt(const Surrogate& model, const ParamVector& theta, const Batch& support, const AdaptOptions& options,
              const ArchMask* mask, MaskCandidateStore* sink, const std::string& workload_id) {
  if (support.size() == 0) throw ContractError("adaptation needs a non-empty support set");
  Adapted out;
  out.theta = theta;
  if (mask) {
    out.mask = *mask;
    out.mask->learnable = options.learn_mask;
  }
  for (std::size_t t = 0; t < options.steps; ++t) {
    const ArchMask* m = out.mask ? &*out.mask : nullptr;
    LossAndGrad lg = model.loss_and_grad(out.theta, support, m, sink != nullptr);
    if (!std::isfinite(lg.loss)) throw NumericError("support loss diverged at adaptation step " + std::to_string(t));
    require_finite(lg.grad, "gradient during adaptation");
    if (sink) sink->collect(workload_id, lg.attention);
    const double lr = options.schedule.at(t);
    sgd_step(out.theta.values, lg.grad, lr);
    if (out.mask && options.learn_mask) {
      require_finite(lg.mask_grad.data(), "mask gradient");
      sgd_step(out.mask->m.data(), lg.mask_grad.data(), lr);
      out.mask_resets += out.mask->clamp();
    }
  }
  if (out.mask) out.mask->learnable = mask->learnable;
  return out;
}

ParamVector inner_adapt(const Surrogate& model, const ParamVector& theta, const Batch& support, std::size_t steps,
                        double lr, const ArchMask* mask) {
  AdaptOptions opt{steps, LrSchedule::constant(lr), false};
  return adapt(model, theta, support, opt, mask).theta;
}

MetaGradient meta_gradient(const Surrogate& model, const ParamVector& theta, const std::vector<const Episode*>& episodes,
                           const MetaConfig& config, std::size_t threads, MaskCandidateStore* sink) {
  if (episodes.empty()) throw ContractError("meta-gradient needs at least one task");
  const std::size_t n = episodes.size();
  std::vector<std::vector<double>> grads(n);
  std::vector<double> losses(n);
  std::vector<MaskCandidateStore> local(sink ? n : 0);
  const AdaptOptions inner{config.inner_steps, LrSchedule::constant(config.inner_lr), false};
  parallel_for(n, threads, [&](std::size_t i) {
    const Episode& ep = *episodes[i];
    MaskCandidateStore* s = sink ? &local[i] : nullptr;
    const Adapted a = adapt(model, theta, ep.support, inner, nullptr, s, ep.workload_id);
    LossAndGrad lg = model.loss_and_grad(a.theta, ep.query, nullptr, s != nullptr);
    require_finite(lg.grad, "meta-gradient");
    if (s) s->collect(ep.workload_id, lg.attention);
    grads[i] = std::move(lg.grad);
    losses[i] = lg.loss;
  });
  MetaGradient out;
  out.grad.assign(theta.size(), 0.0);
  double loss_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += grads[i][k];
    loss_sum += losses[i];
    if (sink) sink->merge(local[i]);
  }
  const double inv = static_cast<double>(n);
  for (double& g : out.grad) g /= inv;
  out.mean_query_loss = loss_sum / inv;
  return out;
}

bool BestTracker::offer(double val_loss, const ParamVector& params, std::size_t at_epoch) {
  if (seen && !(val_loss < loss)) return false;
  loss = val_loss;
  epoch = at_epoch;
  theta = params;
  seen = true;
  return true;
}

double meta_epoch(const Surrogate& model, MetaState& state, const std::vector<Episode>& episodes,
                  const MetaConfig& config, std::size_t threads, MaskCandidateStore* sink) {
  if (episodes.empty()) throw ContractError("meta_epoch needs at least one task");
  std::vector<std::size_t> order(episodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(state.seed, {hash_tag("shuffle"), state.epoch}));
  rng.shuffle(order.begin(), order.end());

  double loss_sum = 0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += config.meta_batch) {
    const std::size_t end = std::min(order.size(), start + config.meta_batch);
    std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(ids.begin(), ids.end());
    std::vector<const Episode*> batch;
    for (std::size_t id : ids) batch.push_back(&episodes[id]);
    MetaGradient mg;
    try {
      mg = meta_gradient(model, state.theta, batch, config, threads, sink);
    } catch (const NumericError& e) {
      std::string tasks;
      for (std::size_t id : ids) tasks += (tasks.empty() ? "" : ",") + std::to_string(id);
      throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(state.epoch) + ", tasks " + tasks + ")");
    }
    clip_grad_norm(mg.grad, config.clip_norm);
    adam_step(state.adam, state.theta.values, mg.grad, config.outer_lr);
    loss_sum += mg.mean_query_loss;
    ++batches;
  }
  ++state.epoch;
  return loss_sum / static_cast<double>(batches);
}

double meta_validate(const Surrogate& model, const ParamVector& theta, const std::vector<Episode>& episodes,
                     const MetaConfig& config, std::size_t threads, MaskCandidateStore* sink) {
  if (episodes.empty()) throw ContractError("meta_validate needs at least one task");
  const std::size_t n = episodes.size();
  std::vector<double> losses(n);
  std::vector<MaskCandidateStore> local(sink ? n : 0);
  const AdaptOptions inner{config.inner_steps, LrSchedule::constant(config.inner_lr), false};
  parallel_for(n, threads, [&](std::size_t i) {
    const Episode& ep = episodes[i];
    MaskCandidateStore* s = sink ? &local[i] : nullptr;
    const Adapted a = adapt(model, theta, ep.support, inner, nullptr, s, ep.workload_id);
    if (s) {
      auto pred = model.forward(a.theta, ep.query.features);
      s->collect(ep.workload_id, pred.attention);
      double sq = 0;
      const auto& p = pred.outputs.data();
      const auto& t = ep.query.targets.data();
      for (std::size_t k = 0; k < p.size(); ++k) sq += (p[k] - t[k]) * (p[k] - t[k]);
      losses[i] = sq / static_cast<double>(p.size());
    } else {
      losses[i] = model.loss(a.theta, ep.query);
    }
  });
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += losses[i];
    if (sink) sink->merge(local[i]);
  }
  return sum / static_cast<double>(n);
}

void train_supervised(const Surrogate& model, ParamVector& theta, AdamState& adam, const std::vector<Batch>& sets,
                      std::size_t sets_per_step, double lr) {
  if (sets.empty() || sets_per_step == 0) throw ContractError("supervised training needs data");
  for (std::size_t start = 0; start < sets.size(); start += sets_per_step) {
    const std::size_t end = std::min(sets.size(), start + sets_per_step);
    std::vector<double> grad(theta.size(), 0.0);
    for (std::size_t i = start; i < end; ++i) {
      const auto lg = model.loss_and_grad(theta, sets[i]);
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += lg.grad[k];
    }
    for (double& g : grad) g /= static_cast<double>(end - start);
    adam_step(adam, theta.values, grad, lr);
  }
}

namespace {

std::vector<Episode> episodes_for(const std::vector<WorkloadSource>& sources, std::size_t per_workload,
                                  const MetaConfig& config, const TargetScaler& scaler, std::uint64_t seed,
                                  std::size_t threads) {
  std::vector<Episode> out;
  for (std::size_t w = 0; w < sources.size(); ++w) {
    const auto tasks =
        make_tasks(sources[w], per_workload, config.support, config.query, derive_seed(seed, {w}), threads);
    for (const auto& t : tasks) out.push_back(to_episode(t, scaler));
  }
  return out;
}

}  // namespace

PretrainResult pretrain(const Surrogate& model, const std::vector<WorkloadSource>& train,
                        const std::vector<WorkloadSource>& val, const TargetScaler& scaler, const MetaConfig& config,
                        std::uint64_t seed, std::size_t threads,
                        const std::function<void(const EpochStats&, const ParamVector&)>& on_epoch) {
  config.validate();
  if (train.empty() || val.empty()) throw ContractError("pre-training needs training and validation workloads");
  using clock = std::chrono::steady_clock;

  MetaState state;
  state.theta = model.init_params(derive_seed(seed, {hash_tag("theta")}));
  state.seed = derive_seed(seed, {hash_tag("meta")});
  const auto val_eps =
      episodes_for(val, config.val_tasks_per_workload, config, scaler, derive_seed(seed, {hash_tag("val")}), threads);

  PretrainResult result;
  BestTracker best;
  {
    const auto t0 = clock::now();
    EpochStats st;
    st.train_loss = std::numeric_limits<double>::quiet_NaN();
    st.val_loss = meta_validate(model, state.theta, val_eps, config, threads);
    st.improved = best.offer(st.val_loss, state.theta, 0);
    st.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    result.log.push_back(st);
    if (on_epoch) on_epoch(st, state.theta);
  }
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    const auto t0 = clock::now();
    const bool last = e == config.epochs;
    MaskCandidateStore* sink = last ? &result.candidates : nullptr;
    const auto train_eps = episodes_for(train, config.tasks_per_workload, config, scaler,
                                        derive_seed(seed, {hash_tag("train"), e}), threads);
    EpochStats st;
    st.epoch = e;
    st.train_loss = meta_epoch(model, state, train_eps, config, threads, sink);
    st.val_loss = meta_validate(model, state.theta, val_eps, config, threads, sink);
    st.improved = best.offer(st.val_loss, state.theta, e);
    st.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    result.log.push_back(st);
    if (on_epoch) on_epoch(st, state.theta);
  }
  result.best_theta = best.theta;
  result.best_val = best.loss;
  result.best_epoch = best.epoch;
  return result;
}

}  // namespace metadse
