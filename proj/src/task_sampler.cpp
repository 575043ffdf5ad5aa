#include "metadse/task_sampler.hpp"

#include <bit>
#include <set>

#include "metadse/errors.hpp"
#include "metadse/parallel.hpp"
#include "metadse/rng.hpp"

namespace metadse {

namespace {

std::uint64_t fold(std::uint64_t h, std::uint64_t x) { return mix64(h ^ x); }

std::uint64_t fold_samples(std::uint64_t h, const std::vector<Sample>& samples) {
  for (const auto& s : samples) {
    for (auto i : s.point.indices) h = fold(h, i);
    h = fold(h, std::bit_cast<std::uint64_t>(s.labels.ipc));
    h = fold(h, std::bit_cast<std::uint64_t>(s.labels.power));
  }
  return h;
}

}  // namespace

std::uint64_t Task::digest() const {
  std::uint64_t h = hash_tag(workload_id);
  h = fold_samples(fold(h, support.size()), support);
  return fold_samples(fold(h, query.size()), query);
}

Task make_task(const WorkloadSource& source, std::size_t support, std::size_t query, std::uint64_t seed) {
  if (support == 0 || query == 0) throw ContractError("tasks need non-empty support and query sets");
  auto samples = source.draw(support + query, seed);
  Task t;
  t.workload_id = source.id();
  t.support.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(support));
  t.query.assign(samples.begin() + static_cast<std::ptrdiff_t>(support), samples.end());
  return t;
}

std::vector<Task> make_tasks(const WorkloadSource& source, std::size_t n_tasks, std::size_t support,
                             std::size_t query, std::uint64_t seed, std::size_t threads) {
  if (support + query > source.capacity())
    throw SourceExhausted("workload '" + source.id() + "' cannot supply " + std::to_string(support + query) +
                          " distinct points per task");
  std::vector<Task> tasks(n_tasks);
  parallel_for(n_tasks, threads,
               [&](std::size_t i) { tasks[i] = make_task(source, support, query, derive_seed(seed, {i})); });
  return tasks;
}

WorkloadSplit split_workloads(const std::vector<std::string>& ids, std::uint64_t seed, std::array<std::size_t, 3> sizes) {
  const std::size_t need = sizes[0] + sizes[1] + sizes[2];
  if (ids.size() < need)
    throw ContractError("splitting needs at least " + std::to_string(need) + " workloads, got " +
                        std::to_string(ids.size()));
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size())
    throw ContractError("workload ids must be unique");
  std::vector<std::string> order = ids;
  Rng rng(derive_seed(seed, {hash_tag("split")}));
  rng.shuffle(order.begin(), order.end());
  WorkloadSplit s;
  auto first = order.begin();
  s.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes[0]));
  first += static_cast<std::ptrdiff_t>(sizes[0]);
  s.val.assign(first, first + static_cast<std::ptrdiff_t>(sizes[1]));
  first += static_cast<std::ptrdiff_t>(sizes[1]);
  s.test.assign(first, first + static_cast<std::ptrdiff_t>(sizes[2]));
  return s;
}

std::uint64_t combine_digests(const std::vector<std::uint64_t>& digests) {
  std::uint64_t h = hash_tag("tasks");
  for (auto d : digests) h = fold(h, d);
  return h;
}

}  // namespace metadse
