#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "metadse/sample.hpp"
#include "metadse/workload_oracle.hpp"

namespace metadse {

// Few-shot episode from one workload: support for adaptation, query for scoring.
struct Task {
  std::string workload_id;
  std::vector<Sample> support;
  std::vector<Sample> query;

  // Hash of every point and label, used to show that two runs saw the same tasks.
  std::uint64_t digest() const;
};

Task make_task(const WorkloadSource& source, std::size_t support, std::size_t query, std::uint64_t seed);

// Task i draws its s+q distinct points from the stream derive_seed(seed, {i}).
std::vector<Task> make_tasks(const WorkloadSource& source, std::size_t n_tasks, std::size_t support,
                             std::size_t query, std::uint64_t seed, std::size_t threads = 1);

struct WorkloadSplit {
  std::vector<std::string> train, val, test;
};

// Random disjoint partition of sizes (train, val, test) drawn from ids.
WorkloadSplit split_workloads(const std::vector<std::string>& ids, std::uint64_t seed,
                              std::array<std::size_t, 3> sizes = {7, 5, 5});

// Folds an ordered sequence of task digests into one value.
std::uint64_t combine_digests(const std::vector<std::uint64_t>& digests);

}  // namespace metadse
